#include "xcbam/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "xcbam/error.hpp"

namespace xcbam {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'X', 'C', 'B', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                      std::to_string(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void f32s(std::vector<float>& out, std::size_t count) {
    if (count > (bytes_.size() - pos_) / 4) need(count * 4, "tensor payload");
    out.resize(count);
    for (auto& f : out) {
      const std::uint32_t bits = u32("tensor payload");
      std::memcpy(&f, &bits, sizeof f);
    }
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return bytes_.size(); }
  const std::uint8_t* data() const noexcept { return bytes_.data(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> stored_dims(const Shape& s, bool rank4) {
  if (rank4) {
    return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  }
  return {static_cast<std::uint32_t>(s.numel())};
}

std::string dims_text(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? ", " : "") + std::to_string(dims[i]);
  return s + "]";
}

// Flat view of every tensor the checkpoint covers, in file order.
template <typename T>
struct Slot {
  std::string name;
  Tensor<T>* tensor;
  bool rank4;
};

template <typename T>
class SlotCollector : public ParamVisitor<T> {
 public:
  void parameter(const std::string& name, Variable<T>& p, ParamRole role) override {
    params.push_back({name, &p.mutable_value(), role == ParamRole::weight});
  }
  void buffer(const std::string& name, Tensor<T>& b) override {
    buffers.push_back({name, &b, false});
  }
  std::vector<Slot<T>> params, buffers;
};

template <typename T>
std::vector<Slot<T>> slots_of(CrossCbamNet<T>& model) {
  SlotCollector<T> c;
  model.visit("", c);
  auto all = std::move(c.params);
  all.insert(all.end(), c.buffers.begin(), c.buffers.end());
  return all;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, data.version);
  put_string(out, data.config_echo);
  put_u32(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    put_string(out, t.name);
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float f : t.values) put_f32(out, f);
  }
  return out;
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Cursor in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not a checkpoint: bad magic at byte offset 0");
  }
  Cursor& c = in;
  c.u32("magic");
  CheckpointData data;
  data.version = c.u32("version");
  if (data.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(data.version) +
                    " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  data.config_echo = c.str("config echo");
  const std::uint32_t count = c.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = c.str("tensor name");
    const std::uint32_t rank = c.u32("rank");
    if (rank == 0 || rank > 8) {
      throw DataError("tensor '" + e.name + "' has invalid rank " + std::to_string(rank) +
                      " at byte offset " + std::to_string(c.pos() - 4));
    }
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.dims.push_back(c.u32("dims"));
      numel *= e.dims.back();
    }
    c.f32s(e.values, numel);
    data.tensors.push_back(std::move(e));
  }
  if (c.pos() != c.size()) {
    throw DataError("trailing bytes after last tensor at byte offset " + std::to_string(c.pos()));
  }
  return data;
}

template <typename T>
CheckpointData snapshot(CrossCbamNet<T>& model) {
  CheckpointData data;
  data.config_echo = model.config().echo();
  for (const auto& slot : slots_of(model)) {
    CheckpointEntry e;
    e.name = slot.name;
    e.dims = stored_dims(slot.tensor->shape(), slot.rank4);
    e.values.reserve(slot.tensor->numel());
    for (const T v : slot.tensor->values()) e.values.push_back(static_cast<float>(v));
    data.tensors.push_back(std::move(e));
  }
  return data;
}

template <typename T>
void save_checkpoint(CrossCbamNet<T>& model, const fs::path& path) {
  const auto bytes = encode_checkpoint(snapshot(model));
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <typename T>
void restore(CrossCbamNet<T>& model, const CheckpointData& data) {
  const auto slots = slots_of(model);
  const std::size_t common = std::min(slots.size(), data.tensors.size());
  for (std::size_t i = 0; i < common; ++i) {
    const auto& e = data.tensors[i];
    const auto want = stored_dims(slots[i].tensor->shape(), slots[i].rank4);
    if (e.name != slots[i].name || e.dims != want) {
      throw ConfigError("checkpoint tensor " + std::to_string(i) + " '" + e.name + "' " +
                        dims_text(e.dims) + " does not match model tensor '" + slots[i].name +
                        "' " + dims_text(want));
    }
  }
  if (slots.size() != data.tensors.size()) {
    const bool model_longer = slots.size() > data.tensors.size();
    throw ConfigError("checkpoint has " + std::to_string(data.tensors.size()) +
                      " tensors, model has " + std::to_string(slots.size()) + "; first unmatched: '" +
                      (model_longer ? slots[common].name : data.tensors[common].name) + "'");
  }
  const std::string echo = model.config().echo();
  if (data.config_echo != echo) {
    throw ConfigError("checkpoint config '" + data.config_echo + "' differs from model config '" +
                      echo + "'");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    T* dst = slots[i].tensor->data();
    const auto& src = data.tensors[i].values;
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<T>(src[j]);
  }
}

template <typename T>
void load_checkpoint(CrossCbamNet<T>& model, const fs::path& path) {
  const CheckpointData data = [&] {
    try {
      return decode_checkpoint(read_file(path));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }();
  restore(model, data);
}

std::string read_checkpoint_echo(const fs::path& path) {
  return decode_checkpoint(read_file(path)).config_echo;
}

#define XCBAM_INSTANTIATE(T)                                                    \
  template CheckpointData snapshot<T>(CrossCbamNet<T>&);                        \
  template void save_checkpoint<T>(CrossCbamNet<T>&, const fs::path&);          \
  template void load_checkpoint<T>(CrossCbamNet<T>&, const fs::path&);          \
  template void restore<T>(CrossCbamNet<T>&, const CheckpointData&);
XCBAM_INSTANTIATE(float)
XCBAM_INSTANTIATE(double)
#undef XCBAM_INSTANTIATE

}  // namespace xcbam
