#include "opl/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "opl/error.hpp"

namespace opl {
namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

struct Header {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::optional<int> classes;  // from "# classes=C"
  std::size_t payload_offset = 0;
};

class HeaderParser {
 public:
  HeaderParser(const std::vector<std::uint8_t>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  Header parse() {
    Header h;
    if (bytes_.size() < 2 || bytes_[0] != 'P') fail("bad magic", 0);
    if (bytes_[1] != '5' && bytes_[1] != '6') fail("unsupported magic P" + std::string(1, static_cast<char>(bytes_[1])), 1);
    h.kind = static_cast<char>(bytes_[1]);
    pos_ = 2;
    h.width = read_int(h);
    h.height = read_int(h);
    h.maxval = read_int(h);
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail("missing whitespace after max value", pos_);
    }
    ++pos_;
    if (h.width <= 0 || h.height <= 0) fail("non-positive dimensions", pos_);
    if (h.maxval != 255) fail("unsupported max value " + std::to_string(h.maxval), pos_);
    h.classes = classes_;
    h.payload_offset = pos_;
    return h;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::size_t offset) const {
    throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(offset));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        std::size_t start = pos_ + 1;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        std::string comment(bytes_.begin() + static_cast<std::ptrdiff_t>(start),
                            bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
        parse_comment(comment, start);
      } else {
        break;
      }
    }
  }

  void parse_comment(const std::string& comment, std::size_t offset) {
    auto first = comment.find_first_not_of(" \t");
    if (first == std::string::npos) return;
    const std::string key = "classes=";
    if (comment.compare(first, key.size(), key) != 0) return;
    std::string value = comment.substr(first + key.size());
    while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back()))) value.pop_back();
    try {
      std::size_t used = 0;
      int c = std::stoi(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
      classes_ = c;
    } catch (const std::exception&) {
      fail("malformed classes comment", offset);
    }
  }

  int read_int(Header&) {
    skip_space_and_comments();
    std::size_t start = pos_;
    long long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) fail("header integer too large", start);
      ++pos_;
    }
    if (pos_ == start) fail("expected integer", start);
    return static_cast<int>(v);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
  std::optional<int> classes_;
};

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  auto bytes = read_all(path);
  Header h = HeaderParser(bytes, path.string()).parse();
  const std::size_t src_channels = h.kind == '6' ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * src_channels;
  if (bytes.size() - h.payload_offset < need) {
    throw FormatError(path.string() + ": truncated payload at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(h.payload_offset + need) + " bytes)");
  }
  ImageTensor img(h.height, h.width, 3);
  const std::uint8_t* src = bytes.data() + h.payload_offset;
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::uint8_t b = src[p * src_channels + (src_channels == 3 ? c : 0)];
      img.data[p * 3 + c] = static_cast<float>(b) / 255.0f;
    }
  }
  return img;
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.channels != 3 && img.channels != 1) {
    throw ShapeError("save_image: unsupported channel count " + std::to_string(img.channels));
  }
  std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                       std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> payload(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) payload[i] = to_byte(img.data[i]);
  write_all(path, header, payload);
}

LabelMap load_label(const std::filesystem::path& path) {
  auto bytes = read_all(path);
  Header h = HeaderParser(bytes, path.string()).parse();
  if (h.kind != '5') {
    throw FormatError(path.string() + ": label maps must be P5 (byte offset 1)");
  }
  if (!h.classes) {
    throw FormatError(path.string() + ": missing '# classes=C' comment before byte offset " +
                      std::to_string(h.payload_offset));
  }
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.payload_offset < need) {
    throw FormatError(path.string() + ": truncated payload at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(h.payload_offset + need) + " bytes)");
  }
  LabelMap lbl(h.height, h.width, *h.classes);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), need, lbl.data.begin());
  lbl.validate();
  return lbl;
}

void save_label(const LabelMap& lbl, const std::filesystem::path& path) {
  lbl.validate();
  std::string header = "P5\n# classes=" + std::to_string(lbl.num_classes) + "\n" +
                       std::to_string(lbl.width) + " " + std::to_string(lbl.height) + "\n255\n";
  write_all(path, header, lbl.data);
}

}  // namespace opl
