#include "closed_form.hpp"

#include <array>

namespace xcbam::testing {

std::int64_t convx_params(int in_ch, int out_ch, int k) {
  return static_cast<std::int64_t>(in_ch) * out_ch * k * k + 2 * out_ch;
}

ClosedForm closed_form(const ClosedFormSpec& s) {
  ClosedForm r;
  int h = s.height / 2, w = s.width / 2;
  auto convx = [&](int ci, int co, int k) {
    r.params += convx_params(ci, co, k);
    r.conv_macs += static_cast<std::uint64_t>(ci) * co * k * k * h * w;
  };
  auto mlp = [&](int c) {
    const int hidden = c / 16;
    r.params += 2LL * c * hidden + hidden + c;
    r.conv_macs += 2ULL * c * hidden;
  };

  convx(3, 32, 3);
  h /= 2;
  w /= 2;
  convx(32, 64, 3);
  const std::array<int, 3> widths{256, 512, 1024};
  const std::array<int, 3> extra = s.large ? std::array{3, 4, 2} : std::array{1, 1, 1};
  int in = 64;
  for (int stage = 0; stage < 3; ++stage) {
    const int c = widths[stage];
    for (int j = 0; j <= extra[stage]; ++j) {
      convx(in, c / 2, 1);
      if (j == 0) {
        h /= 2;
        w /= 2;
      }
      convx(c / 2, c / 4, 3);
      convx(c / 4, c / 8, 3);
      convx(c / 8, c / 8, 3);
      in = c;
    }
  }
  r.backbone_params = r.params;

  const int ch = s.channels;
  for (int d : s.dilations) convx(1024, ch, d == 1 ? 1 : 3);
  convx(1024, ch, 1);  // SE input projection
  mlp(ch);
  convx(2 * ch, ch, 1);

  auto ccbam = [&] {
    for (int side = 0; side < 2; ++side) {
      mlp(ch);
      mlp(ch);
      r.params -= 2LL * ch * (ch / 16) + ch / 16 + ch;  // one bottleneck shared by both pools
      r.params += 3;                                    // spatial gate: 2 weights + bias
      r.conv_macs += 2ULL * h * w;
    }
  };
  auto head = [&] {
    convx(ch, ch, 3);
    r.params += static_cast<std::int64_t>(ch) * s.classes + s.classes;
    r.conv_macs += static_cast<std::uint64_t>(ch) * s.classes * h * w;
  };
  h *= 2;
  w *= 2;
  convx(512, ch, 1);
  ccbam();
  if (s.aux_head) head();
  h *= 2;
  w *= 2;
  convx(256, ch, 1);
  ccbam();
  head();
  return r;
}

}  // namespace xcbam::testing
