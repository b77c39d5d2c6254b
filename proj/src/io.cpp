#include "geodiff/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace geodiff {

namespace {

constexpr char kDenoiserMagic[8] = {'G', 'D', 'T', 'O', 'Y', 'N', 'N', '\0'};
constexpr std::uint32_t kDenoiserVersion = 1;

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void put_u32(std::string& out, std::uint32_t v, bool little) {
  for (int i = 0; i < 4; ++i) {
    const int shift = little ? 8 * i : 8 * (3 - i);
    out.push_back(static_cast<char>((v >> shift) & 0xffu));
  }
}

std::uint32_t get_u32(const char* p, bool little) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const auto byte = static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]));
    v |= byte << (little ? 8 * i : 8 * (3 - i));
  }
  return v;
}

// Reads one whitespace-delimited header token; PFM headers separate fields
// by single whitespace characters and end with exactly one before the payload.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view token() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw IoError("pfm: truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  std::size_t payload_offset() {
    if (pos_ >= bytes_.size()) throw IoError("pfm: missing payload");
    return pos_ + 1;  // single separator after the scale
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <class T>
T parse_number(std::string_view s, const char* what) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw IoError(std::string("pfm: bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string encode_pfm(const PfmImage& image) {
  require(image.width >= 1 && image.height >= 1, "pfm: dimensions must be positive");
  require(image.scale != 0.0 && std::isfinite(image.scale), "pfm: scale must be finite and nonzero");
  const auto row = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.channels());
  require(image.data.size() == row * static_cast<std::size_t>(image.height), "pfm: payload size mismatch");
  std::string out = image.kind == PfmKind::color ? "PF\n" : "Pf\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n" + shortest(image.scale) + "\n";
  const bool little = image.scale < 0.0;
  out.reserve(out.size() + image.data.size() * 4);
  for (int r = image.height - 1; r >= 0; --r) {
    const float* src = image.data.data() + static_cast<std::size_t>(r) * row;
    for (std::size_t i = 0; i < row; ++i) put_u32(out, std::bit_cast<std::uint32_t>(src[i]), little);
  }
  return out;
}

PfmImage decode_pfm(std::string_view bytes) {
  HeaderReader header(bytes);
  PfmImage image;
  const std::string_view magic = header.token();
  if (magic == "Pf") {
    image.kind = PfmKind::grayscale;
  } else if (magic == "PF") {
    image.kind = PfmKind::color;
  } else {
    throw IoError("pfm: bad magic");
  }
  image.width = parse_number<int>(header.token(), "width");
  image.height = parse_number<int>(header.token(), "height");
  image.scale = parse_number<double>(header.token(), "scale");
  if (image.width < 1 || image.height < 1) throw IoError("pfm: non-positive dimensions");
  if (image.scale == 0.0 || !std::isfinite(image.scale)) throw IoError("pfm: invalid scale");

  const std::size_t offset = header.payload_offset();
  const auto row = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.channels());
  const std::size_t count = row * static_cast<std::size_t>(image.height);
  if (bytes.size() - offset != count * 4) throw IoError("pfm: payload length does not match the header");
  const bool little = image.scale < 0.0;
  image.data.resize(count);
  const char* p = bytes.data() + offset;
  for (int r = image.height - 1; r >= 0; --r) {
    float* dst = image.data.data() + static_cast<std::size_t>(r) * row;
    for (std::size_t i = 0; i < row; ++i, p += 4) dst[i] = std::bit_cast<float>(get_u32(p, little));
  }
  return image;
}

PfmImage to_pfm(const Field2D& field) {
  PfmImage image{PfmKind::grayscale, field.width(), field.height(), -1.0, {}};
  image.data.reserve(field.size());
  for (double v : field.values()) image.data.push_back(static_cast<float>(v));
  return image;
}

PfmImage to_pfm(const FieldStack& stack) {
  require(stack.channels() == 1 || stack.channels() == 3, "pfm holds 1 or 3 channels");
  if (stack.channels() == 1) return to_pfm(stack.plane(0));
  PfmImage image{PfmKind::color, stack.width(), stack.height(), -1.0, {}};
  image.data.reserve(stack.pixels() * 3);
  for (std::size_t p = 0; p < stack.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) image.data.push_back(static_cast<float>(stack.plane(c)[p]));
  }
  return image;
}

FieldStack from_pfm(const PfmImage& image) {
  const int ch = image.channels();
  FieldStack stack(ch, image.height, image.width);
  for (std::size_t p = 0; p < stack.pixels(); ++p) {
    for (int c = 0; c < ch; ++c) {
      const float v = image.data[p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c)];
      if (!std::isfinite(v)) throw NumericalError("pfm: non-finite sample");
      stack.plane(c)[p] = v;
    }
  }
  return stack;
}

std::string encode_pgm16(const Field2D& field, double lo, double hi) {
  require(hi > lo, "pgm: empty value range");
  std::string out = "P5\n" + std::to_string(field.width()) + " " + std::to_string(field.height()) + "\n65535\n";
  for (double v : field.values()) {
    const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(u * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

std::string format_metrics(const MetricsReport& report) {
  std::map<std::string, std::string> lines;
  for (const auto& [k, v] : report.values) lines[k] = shortest(v);
  for (const auto& [k, v] : report.config) lines["config." + k] = v;
  lines["pixel_count"] = std::to_string(report.pixel_count);
  std::string out;
  for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
  return out;
}

std::string encode_denoiser(const toy::ToyDenoiser& model) {
  std::string out(kDenoiserMagic, sizeof kDenoiserMagic);
  put_u32(out, kDenoiserVersion, true);
  const toy::ToyArch& a = model.arch();
  for (int v : {a.target_channels, a.cond_channels, a.width, a.hidden_layers, a.time_features, a.timesteps}) {
    put_u32(out, static_cast<std::uint32_t>(v), true);
  }
  put_u32(out, static_cast<std::uint32_t>(model.parameterization()), true);
  put_u32(out, static_cast<std::uint32_t>(model.params().size()), true);
  for (double p : model.params()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)), true);
  return out;
}

toy::ToyDenoiser decode_denoiser(std::string_view bytes) {
  constexpr std::size_t kHeader = sizeof kDenoiserMagic + 4 * 9;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kDenoiserMagic, sizeof kDenoiserMagic) != 0) {
    throw IoError("denoiser file: bad magic");
  }
  const char* p = bytes.data() + sizeof kDenoiserMagic;
  auto next = [&p] {
    const std::uint32_t v = get_u32(p, true);
    p += 4;
    return v;
  };
  if (next() != kDenoiserVersion) throw IoError("denoiser file: unsupported version");
  toy::ToyArch arch;
  arch.target_channels = static_cast<int>(next());
  arch.cond_channels = static_cast<int>(next());
  arch.width = static_cast<int>(next());
  arch.hidden_layers = static_cast<int>(next());
  arch.time_features = static_cast<int>(next());
  arch.timesteps = static_cast<int>(next());
  const std::uint32_t tag = next();
  if (tag > static_cast<std::uint32_t>(Parameterization::x0)) throw IoError("denoiser file: bad parameterization tag");
  const std::uint32_t count = next();
  std::size_t expected = 0;
  try {
    expected = toy::ToyDenoiser::parameter_count(arch);
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("denoiser file: ") + e.what());
  }
  if (count != expected) throw IoError("denoiser file: parameter count does not match the architecture");
  if (bytes.size() != kHeader + static_cast<std::size_t>(count) * 4) throw IoError("denoiser file: truncated payload");
  std::vector<double> params(count);
  for (double& v : params) {
    const float f = std::bit_cast<float>(next());
    if (!std::isfinite(f)) throw IoError("denoiser file: non-finite parameter");
    v = f;
  }
  return toy::ToyDenoiser(arch, static_cast<Parameterization>(tag), std::move(params));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

PfmImage read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

void write_pfm(const std::filesystem::path& path, const PfmImage& image) { write_file_atomic(path, encode_pfm(image)); }

}  // namespace geodiff
