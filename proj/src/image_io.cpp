#include "mvs/image_io.h"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "mvs/errors.h"

namespace mvs {

namespace {

bool host_is_little_endian() {
  return std::endian::native == std::endian::little;
}

[[noreturn]] void pfm_error(const std::filesystem::path& path, size_t offset,
                            const std::string& what) {
  throw DataError("malformed PFM " + path.string() + " at byte " +
                  std::to_string(offset) + ": " + what);
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const Tensor& map) {
  if (map.ndim() != 2) throw DataError("write_pfm: map must be [H,W]");
  for (double v : map.data()) {
    if (std::isnan(v)) throw DataError("write_pfm: NaN value");
  }
  size_t h = map.dim(0), w = map.dim(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PFM: " + path.string());
  out << "Pf\n" << w << ' ' << h << "\n-1.0\n";
  std::vector<char> row(w * 4);
  for (size_t y = h; y-- > 0;) {  // bottom-to-top
    for (size_t x = 0; x < w; ++x) {
      float f = static_cast<float>(map.at({y, x}));
      uint32_t bits = std::bit_cast<uint32_t>(f);
      row[x * 4 + 0] = static_cast<char>(bits & 0xff);
      row[x * 4 + 1] = static_cast<char>((bits >> 8) & 0xff);
      row[x * 4 + 2] = static_cast<char>((bits >> 16) & 0xff);
      row[x * 4 + 3] = static_cast<char>((bits >> 24) & 0xff);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("failed writing PFM: " + path.string());
}

Tensor read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("PFM not found: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  size_t pos = 0;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > bytes.size()) pfm_error(path, bytes.size(), what);
  };
  need(2, "truncated magic");
  if (bytes[0] != 'P' || (bytes[1] != 'f' && bytes[1] != 'F')) {
    pfm_error(path, 0, "expected 'Pf' magic");
  }
  if (bytes[1] == 'F') pfm_error(path, 1, "color PFM not supported, need 'Pf'");
  pos = 2;
  auto skip_ws = [&](const char* what) {
    size_t start = pos;
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (pos == start) pfm_error(path, pos, std::string("expected whitespace before ") + what);
  };
  auto token = [&](const char* what) {
    skip_ws(what);
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (pos == start) pfm_error(path, pos, std::string("missing ") + what);
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  auto to_long = [&](const std::string& tok, size_t at, const char* what) {
    try {
      size_t used = 0;
      long v = std::stol(tok, &used);
      if (used != tok.size() || v <= 0) pfm_error(path, at, std::string("bad ") + what);
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      pfm_error(path, at, std::string("bad ") + what);
    }
  };
  std::string wt = token("width");
  long w = to_long(wt, pos - wt.size(), "width");
  std::string ht = token("height");
  long h = to_long(ht, pos - ht.size(), "height");
  std::string st = token("scale");
  double scale = 0.0;
  try {
    size_t used = 0;
    scale = std::stod(st, &used);
    if (used != st.size() || scale == 0.0) pfm_error(path, pos - st.size(), "bad scale");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    pfm_error(path, pos - st.size(), "bad scale");
  }
  need(1, "missing whitespace after scale");
  if (!std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    pfm_error(path, pos, "expected single whitespace after scale");
  }
  ++pos;

  size_t count = static_cast<size_t>(w) * static_cast<size_t>(h);
  need(count * 4, "truncated pixel data");
  bool file_le = scale < 0.0;
  bool swap = file_le != host_is_little_endian();
  std::vector<double> data(count);
  for (long y = 0; y < h; ++y) {
    long img_y = h - 1 - y;  // file rows are bottom-to-top
    for (long x = 0; x < w; ++x) {
      unsigned char b[4];
      std::memcpy(b, bytes.data() + pos, 4);
      pos += 4;
      if (swap) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                      (static_cast<uint32_t>(b[2]) << 16) |
                      (static_cast<uint32_t>(b[3]) << 24);
      data[static_cast<size_t>(img_y) * w + x] =
          static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return Tensor::from_data({static_cast<size_t>(h), static_cast<size_t>(w)},
                           std::move(data));
}

namespace {

struct FileHandle {
  std::FILE* fp = nullptr;
  explicit FileHandle(const std::filesystem::path& path, const char* mode)
      : fp(std::fopen(path.string().c_str(), mode)) {}
  ~FileHandle() {
    if (fp) std::fclose(fp);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DataError("write_png_rgb: image must be [3,H,W]");
  }
  size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> pixels(h * w * 3);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t i = 0; i < h * w; ++i) {
      double v = image.data()[c * h * w + i];
      v = std::min(std::max(v, 0.0), 1.0);
      pixels[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }

  FileHandle file(path, "wb");
  if (!file.fp) throw DataError("cannot write PNG: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng error writing " + path.string());
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (size_t y = 0; y < h; ++y) {
    png_write_row(png, pixels.data() + y * w * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png_rgb(const std::filesystem::path& path) {
  FileHandle file(path, "rb");
  if (!file.fp) throw DataError("PNG not found: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng error reading " + path.string());
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  size_t w = png_get_image_width(png, info);
  size_t h = png_get_image_height(png, info);
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG channel layout: " + path.string());
  }
  std::vector<unsigned char> pixels(h * w * 3);
  for (size_t y = 0; y < h; ++y) {
    png_read_row(png, pixels.data() + y * w * 3, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> data(3 * h * w);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t i = 0; i < h * w; ++i) {
      data[c * h * w + i] = static_cast<double>(pixels[i * 3 + c]) / 255.0;
    }
  }
  return Tensor::from_data({3, h, w}, std::move(data));
}

}  // namespace mvs
