#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "opl/error.hpp"
#include "opl/micronet.hpp"

namespace opl {
namespace {

constexpr char kMagic[4] = {'M', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;
// Step counter and seed ride along as tensors of four 16-bit chunks, each
// exactly representable in f32.
constexpr const char* kStepTensor = "adam.step";
constexpr const char* kSeedTensor = "meta.seed";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    str(t.name);
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
    bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string name) : buf_(std::move(data)), name_(std::move(name)) {}

  void bytes(void* p, std::size_t n) {
    if (buf_.size() - pos_ < n) {
      throw FormatError(name_ + ": truncated checkpoint at byte offset " + std::to_string(pos_));
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > buf_.size() - pos_) {
      throw FormatError(name_ + ": string length past end of file at byte offset " + std::to_string(pos_));
    }
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    Tensor t;
    t.name = str();
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError(name_ + ": implausible tensor rank for '" + t.name + "'");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = u32();
      t.shape.push_back(static_cast<int>(d));
      n *= d;
    }
    if (n > (buf_.size() - pos_) / sizeof(float)) {
      throw FormatError(name_ + ": truncated payload of tensor '" + t.name + "' at byte offset " +
                        std::to_string(pos_));
    }
    t.data.resize(n);
    bytes(t.data.data(), n * sizeof(float));
    return t;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  std::string buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

Tensor pack_u64(const char* name, std::uint64_t v) {
  Tensor t{name, {4}, std::vector<float>(4)};
  for (int i = 0; i < 4; ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>((v >> (16 * i)) & 0xFFFF);
  return t;
}

std::uint64_t unpack_u64(const Tensor& t, const std::string& file) {
  if (t.shape != std::vector<int>{4}) throw FormatError(file + ": malformed '" + t.name + "' tensor");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float f = t.data[static_cast<std::size_t>(i)];
    if (!(f >= 0 && f <= 65535) || f != static_cast<float>(static_cast<int>(f))) {
      throw FormatError(file + ": malformed '" + t.name + "' tensor");
    }
    v |= static_cast<std::uint64_t>(static_cast<int>(f)) << (16 * i);
  }
  return v;
}

ModelState decode(const std::filesystem::path& path, const ArchPreset* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()), path.string());

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic at byte offset 0");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::string preset_name = r.str();
  const std::uint32_t count = r.u32();
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) tensors.push_back(r.tensor());
  if (!r.at_end()) {
    throw FormatError(path.string() + ": trailing bytes at byte offset " + std::to_string(r.offset()));
  }

  ModelState model;
  for (auto& t : tensors) {
    if (t.name == kStepTensor) {
      model.step = unpack_u64(t, path.string());
    } else if (t.name == kSeedTensor) {
      model.seed = unpack_u64(t, path.string());
    } else if (t.name.rfind("adam.m.", 0) == 0) {
      t.name = t.name.substr(7);
      model.adam_m.push_back(std::move(t));
    } else if (t.name.rfind("adam.v.", 0) == 0) {
      t.name = t.name.substr(7);
      model.adam_v.push_back(std::move(t));
    } else {
      model.params.push_back(std::move(t));
    }
  }
  if (model.params.empty()) throw FormatError(path.string() + ": checkpoint holds no parameters");

  if (expected != nullptr) {
    if (expected->name != preset_name) {
      throw ShapeError(path.string() + ": checkpoint preset '" + preset_name + "' is not '" + expected->name + "'");
    }
    model.preset = *expected;
  } else {
    const int classes = model.params.back().shape.empty() ? 0 : model.params.back().shape.front();
    try {
      model.preset = ArchPreset::from_name(preset_name, classes);
    } catch (const ConfigError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  model.validate();
  return model;
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  model.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(model.preset.name);
  w.u32(static_cast<std::uint32_t>(3 * model.params.size() + 2));
  for (const auto& t : model.params) w.tensor(t);
  for (auto t : model.adam_m) {
    t.name = "adam.m." + t.name;
    w.tensor(t);
  }
  for (auto t : model.adam_v) {
    t.name = "adam.v." + t.name;
    w.tensor(t);
  }
  w.tensor(pack_u64(kStepTensor, model.step));
  w.tensor(pack_u64(kSeedTensor, model.seed));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) { return decode(path, nullptr); }

ModelState load_checkpoint(const std::filesystem::path& path, const ArchPreset& expected) {
  return decode(path, &expected);
}

}  // namespace opl
