#include "tofstereo/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <system_error>

namespace tofstereo::io {

namespace {

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const fs::path& path) {
  if (in.size() < pos + sizeof(T)) throw Error("truncated file: " + path.string());
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  return v;
}

// ---------------------------------------------------------------------------
// PFM

struct PfmHeader {
  int channels = 1;
  int width = 0;
  int height = 0;
  bool little_endian = true;
  std::size_t payload_offset = 0;
};

PfmHeader parse_pfm_header(const std::string& bytes, const fs::path& path) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw Error("malformed PFM header: " + path.string());
    return bytes.substr(start, pos - start);
  };
  PfmHeader h;
  const std::string magic = token();
  if (magic == "Pf") {
    h.channels = 1;
  } else if (magic == "PF") {
    h.channels = 3;
  } else {
    throw Error("malformed PFM header (bad magic): " + path.string());
  }
  auto parse_int = [&](const std::string& t) {
    if (t.empty() || t.size() > 9 || t.find_first_not_of("0123456789") != std::string::npos) {
      throw Error("malformed PFM header (bad dimension '" + t + "'): " + path.string());
    }
    return std::stol(t);
  };
  const long w = parse_int(token());
  const long ht = parse_int(token());
  if (w <= 0 || ht <= 0) throw Error("malformed PFM header (zero dimension): " + path.string());
  if (w > kMaxImageSide || ht > kMaxImageSide) {
    throw Error("PFM dimension overflow: " + path.string());
  }
  const std::string scale_tok = token();
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_tok, &used);
    if (used != scale_tok.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error("malformed PFM header (bad scale): " + path.string());
  }
  if (scale == 0.0 || !std::isfinite(scale)) {
    throw Error("malformed PFM header (bad scale): " + path.string());
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error("truncated PFM payload: " + path.string());
  }
  ++pos;  // single whitespace separator
  h.width = static_cast<int>(w);
  h.height = static_cast<int>(ht);
  h.little_endian = scale < 0.0;
  h.payload_offset = pos;
  const std::size_t need = std::size_t(w) * std::size_t(ht) * std::size_t(h.channels) * 4;
  if (bytes.size() - pos < need) throw Error("truncated PFM payload: " + path.string());
  return h;
}

float pfm_sample(const std::string& bytes, std::size_t offset, bool little) {
  float v;
  std::memcpy(&v, bytes.data() + offset, 4);
  const bool native_little = std::endian::native == std::endian::little;
  if (little != native_little) v = byteswap_value(v);
  return v;
}

std::string pfm_bytes(int width, int height, int channels,
                      const std::function<float(int x, int y, int c)>& sample) {
  std::string out = (channels == 1 ? "Pf\n" : "PF\n") + std::to_string(width) + " " +
                    std::to_string(height) + "\n-1.0\n";
  out.reserve(out.size() + std::size_t(width) * height * channels * 4);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) put_le(out, sample(x, y, c));
    }
  }
  return out;
}

void write_bytes_atomic(const fs::path& path, const std::string& bytes) {
  write_atomic(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write " + path.string());
  });
}

// ---------------------------------------------------------------------------
// PNG

struct PngFile {
  std::FILE* fp = nullptr;
  ~PngFile() {
    if (fp != nullptr) std::fclose(fp);
  }
};

// Writes a grayscale PNG of the given bit depth; rows are big-endian samples.
void write_png_gray(const fs::path& path, int width, int height, int bit_depth,
                    const std::vector<unsigned char>& rows) {
  if (width <= 0 || height <= 0) throw Error("cannot write empty PNG: " + path.string());
  write_atomic(path, [&](const fs::path& tmp) {
    PngFile file;
    file.fp = std::fopen(tmp.c_str(), "wb");
    if (file.fp == nullptr) throw Error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
      png_destroy_write_struct(&png, &info);
      throw Error("libpng initialization failed");
    }
    const std::size_t stride = std::size_t(width) * std::size_t(bit_depth / 8);
    volatile bool failed = false;
    if (setjmp(png_jmpbuf(png))) {
      failed = true;
    } else {
      png_init_io(png, file.fp);
      png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth,
                   PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                   PNG_FILTER_TYPE_DEFAULT);
      png_write_info(png, info);
      for (int y = 0; y < height; ++y) {
        png_write_row(png, rows.data() + std::size_t(y) * stride);
      }
      png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    if (failed) throw Error("PNG encoding failed: " + path.string());
    if (std::fflush(file.fp) != 0) throw Error("cannot write " + path.string());
  });
}

struct GrayPng {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  std::vector<unsigned char> rows;  // big-endian samples
};

GrayPng read_png_gray(const fs::path& path) {
  PngFile file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (file.fp == nullptr) throw Error("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialization failed");
  }
  GrayPng out;
  const char* volatile problem = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    problem = "corrupt PNG";
  } else {
    png_init_io(png, file.fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
      problem = "expected 8- or 16-bit grayscale PNG";
    } else if (w == 0 || h == 0 || w > png_uint_32(kMaxImageSide) ||
               h > png_uint_32(kMaxImageSide)) {
      problem = "PNG dimension overflow";
    } else if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
      problem = "interlaced PNG not supported";
    } else {
      out.width = int(w);
      out.height = int(h);
      out.bit_depth = depth;
      const std::size_t stride = std::size_t(w) * std::size_t(depth / 8);
      out.rows.resize(stride * h);
      for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, out.rows.data() + y * stride, nullptr);
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (problem != nullptr) throw Error(std::string(const_cast<const char*>(problem)) + ": " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Parameter blobs

constexpr char kMagic[8] = {'T', 'O', 'F', 'S', 'T', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindClassifier = 1;
constexpr std::uint32_t kKindBlend = 2;
constexpr std::uint32_t kMaxBlobDim = 1 << 16;

std::string blob_header(std::uint32_t kind) {
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, kind);
  return out;
}

std::size_t check_blob_header(const std::string& bytes, std::uint32_t kind,
                              const fs::path& path) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a parameter file: " + path.string());
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos, path);
  if (version != kVersion) {
    throw Error("unsupported parameter file version " + std::to_string(version) + ": " +
                path.string());
  }
  const auto got = get_le<std::uint32_t>(bytes, pos, path);
  if (got != kind) throw Error("parameter file holds a different model kind: " + path.string());
  return pos;
}

void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le(out, m(r, c));
}

void get_matrix(const std::string& in, std::size_t& pos, Eigen::MatrixXd& m,
                const fs::path& path) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_le<double>(in, pos, path);
}

void get_vector(const std::string& in, std::size_t& pos, Eigen::VectorXd& v,
                const fs::path& path) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_le<double>(in, pos, path);
}

}  // namespace

void write_atomic(const fs::path& path, const std::function<void(const fs::path& tmp)>& writer) {
  std::error_code ec;
  if (path.has_parent_path() && !fs::is_directory(path.parent_path(), ec)) {
    throw Error("cannot write " + path.string() + ": directory does not exist");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    writer(tmp);
  } catch (...) {
    fs::remove(tmp, ec);
    throw;
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot write " + path.string());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text);
}

void write_pfm_raw(const fs::path& path, const Map<float>& map) {
  if (map.empty()) throw Error("cannot write empty PFM: " + path.string());
  write_bytes_atomic(path, pfm_bytes(map.width(), map.height(), 1,
                                     [&](int x, int y, int) { return map(x, y); }));
}

Map<float> read_pfm_raw(const fs::path& path) {
  const std::string bytes = read_all(path);
  const PfmHeader h = parse_pfm_header(bytes, path);
  if (h.channels != 1) throw Error("expected grayscale PFM: " + path.string());
  Map<float> out(h.width, h.height);
  std::size_t off = h.payload_offset;
  for (int y = h.height - 1; y >= 0; --y) {
    for (int x = 0; x < h.width; ++x, off += 4) out(x, y) = pfm_sample(bytes, off, h.little_endian);
  }
  return out;
}

void write_pfm(const fs::path& path, const DepthMap& depth) {
  Map<float> raw(depth.width(), depth.height(), 0.0f);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth.is_valid(i)) raw[i] = depth[i];
  }
  write_pfm_raw(path, raw);
}

DepthMap read_pfm(const fs::path& path) {
  const Map<float> raw = read_pfm_raw(path);
  DepthMap out(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (std::isfinite(raw[i]) && raw[i] > 0.0f) out.set(i, raw[i]);
  }
  return out;
}

void write_pfm_rgb(const fs::path& path, const Map<Rgb>& map) {
  if (map.empty()) throw Error("cannot write empty PFM: " + path.string());
  write_bytes_atomic(path, pfm_bytes(map.width(), map.height(), 3, [&](int x, int y, int c) {
                       return map(x, y)[std::size_t(c)];
                     }));
}

Map<Rgb> read_pfm_rgb(const fs::path& path) {
  const std::string bytes = read_all(path);
  const PfmHeader h = parse_pfm_header(bytes, path);
  if (h.channels != 3) throw Error("expected color PFM: " + path.string());
  Map<Rgb> out(h.width, h.height, Rgb{0.0f, 0.0f, 0.0f});
  std::size_t off = h.payload_offset;
  for (int y = h.height - 1; y >= 0; --y) {
    for (int x = 0; x < h.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c, off += 4) {
        out(x, y)[c] = pfm_sample(bytes, off, h.little_endian);
      }
    }
  }
  return out;
}

void write_png16(const fs::path& path, const DepthMap& depth) {
  std::vector<unsigned char> rows(depth.size() * 2, 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!depth.is_valid(i)) continue;
    const double mm = std::floor(double(depth[i]) * 1000.0);
    const auto v = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    rows[2 * i] = static_cast<unsigned char>(v >> 8);
    rows[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  write_png_gray(path, depth.width(), depth.height(), 16, rows);
}

DepthMap read_png16(const fs::path& path) {
  const GrayPng png = read_png_gray(path);
  if (png.bit_depth != 16) throw Error("expected 16-bit PNG: " + path.string());
  DepthMap out(png.width, png.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned v = (unsigned(png.rows[2 * i]) << 8) | png.rows[2 * i + 1];
    if (v != 0) out.set(i, static_cast<float>(v / 1000.0));
  }
  return out;
}

void write_png8(const fs::path& path, const Map<std::uint8_t>& map) {
  std::vector<unsigned char> rows(map.data().begin(), map.data().end());
  write_png_gray(path, map.width(), map.height(), 8, rows);
}

Map<std::uint8_t> read_png8(const fs::path& path) {
  const GrayPng png = read_png_gray(path);
  if (png.bit_depth != 8) throw Error("expected 8-bit PNG: " + path.string());
  Map<std::uint8_t> out(png.width, png.height);
  std::copy(png.rows.begin(), png.rows.end(), out.data().begin());
  return out;
}

void write_image(const fs::path& path, const Image& image) {
  Map<std::uint8_t> bytes(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(double(image[i]), 0.0, 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png8(path, bytes);
}

Image read_image(const fs::path& path) {
  const Map<std::uint8_t> bytes = read_png8(path);
  Image out(bytes.width(), bytes.height());
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = static_cast<float>(bytes[i] / 255.0);
  return out;
}

void write_classifier(const fs::path& path, const dei::ClassifierParams& params) {
  params.validate();
  std::string out = blob_header(kKindClassifier);
  put_le(out, std::uint32_t(params.input_dim()));
  put_le(out, std::uint32_t(params.hidden_dim()));
  put_le(out, std::uint32_t(dei::kLevels));
  put_matrix(out, params.input_mean);
  put_matrix(out, params.input_scale);
  put_matrix(out, params.w1);
  put_matrix(out, params.b1);
  put_matrix(out, params.w2);
  put_matrix(out, params.b2);
  write_bytes_atomic(path, out);
}

dei::ClassifierParams read_classifier(const fs::path& path) {
  require_file(path);
  const std::string bytes = read_all(path);
  std::size_t pos = check_blob_header(bytes, kKindClassifier, path);
  const auto in = get_le<std::uint32_t>(bytes, pos, path);
  const auto hidden = get_le<std::uint32_t>(bytes, pos, path);
  const auto levels = get_le<std::uint32_t>(bytes, pos, path);
  if (in == 0 || hidden == 0 || in > kMaxBlobDim || hidden > kMaxBlobDim ||
      levels != std::uint32_t(dei::kLevels)) {
    throw Error("invalid parameter dimensions: " + path.string());
  }
  dei::ClassifierParams p = dei::ClassifierParams::zeros(int(in), int(hidden));
  get_vector(bytes, pos, p.input_mean, path);
  get_vector(bytes, pos, p.input_scale, path);
  get_matrix(bytes, pos, p.w1, path);
  get_vector(bytes, pos, p.b1, path);
  get_matrix(bytes, pos, p.w2, path);
  get_vector(bytes, pos, p.b2, path);
  if (pos != bytes.size()) throw Error("trailing bytes in parameter file: " + path.string());
  p.validate();
  return p;
}

void write_blend(const fs::path& path, const fusion::BlendParams& params) {
  params.validate();
  std::string out = blob_header(kKindBlend);
  put_le(out, std::uint32_t(fusion::kBlendFeatureDim));
  const Eigen::VectorXd flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_le(out, flat[i]);
  write_bytes_atomic(path, out);
}

fusion::BlendParams read_blend(const fs::path& path) {
  require_file(path);
  const std::string bytes = read_all(path);
  std::size_t pos = check_blob_header(bytes, kKindBlend, path);
  const auto dim = get_le<std::uint32_t>(bytes, pos, path);
  if (dim != std::uint32_t(fusion::kBlendFeatureDim)) {
    throw Error("invalid parameter dimensions: " + path.string());
  }
  Eigen::VectorXd flat(fusion::kBlendFeatureDim + 1);
  get_vector(bytes, pos, flat, path);
  if (pos != bytes.size()) throw Error("trailing bytes in parameter file: " + path.string());
  const fusion::BlendParams p = fusion::BlendParams::unflatten(flat);
  p.validate();
  return p;
}

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error("missing file: " + path.string());
}

}  // namespace tofstereo::io
