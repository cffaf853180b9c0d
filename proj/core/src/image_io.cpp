#include "stereops/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace stereops {

Image::Image(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || c < 0) throw Error("Image: negative dimensions");
  pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
}

Matrix Image::channel(int c) const {
  if (c < 0 || c >= channels) throw Error("Image::channel: channel index out of range");
  Matrix m(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m(y, x) = at(x, y, c);
  return m;
}

Image Image::from_planes(const std::vector<Matrix>& planes) {
  if (planes.empty()) throw Error("Image::from_planes: no planes");
  const auto h = static_cast<int>(planes[0].rows());
  const auto w = static_cast<int>(planes[0].cols());
  Image img(w, h, static_cast<int>(planes.size()));
  for (std::size_t c = 0; c < planes.size(); ++c) {
    if (planes[c].rows() != h || planes[c].cols() != w) throw Error("Image::from_planes: plane sizes differ");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(x, y, static_cast<int>(c)) = planes[c](y, x);
  }
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("cannot open '" + path + "'");
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw Error("'" + path + "' is not a PNG file");

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng: out of memory");
  }
  Image img;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("failed to decode '" + path + "': " + message);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian 16-bit samples
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(h));
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(w, h, channels);
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y) {
    const png_byte* row = rows[static_cast<std::size_t>(y)];
    for (int i = 0; i < w * channels; ++i) {
      double v;
      if (depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, row + 2 * i, 2);
        v = s;
      } else {
        v = row[i];
      }
      img.pixels[static_cast<std::size_t>(y) * w * channels + i] = v / maxv;
    }
  }
  return img;
}

void write_png(const std::string& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw Error("write_png: bit depth must be 8 or 16");
  int color;
  switch (image.channels) {
    case 1: color = PNG_COLOR_TYPE_GRAY; break;
    case 2: color = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color = PNG_COLOR_TYPE_RGB; break;
    case 4: color = PNG_COLOR_TYPE_RGBA; break;
    default: throw Error("write_png: unsupported channel count " + std::to_string(image.channels));
  }
  if (image.width < 1 || image.height < 1) throw Error("write_png: empty image");

  const int bytes = bit_depth / 8;
  const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels * bytes;
  std::vector<png_byte> buffer(stride * static_cast<std::size_t>(image.height));
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = std::clamp(image.pixels[i], 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(v * maxv));
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<png_byte>(q & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(q);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);

  FilePtr f = open_file(path, "wb");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error("libpng: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to encode '" + path + "': " + message);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "Pf" && magic != "PF") || w < 1 || h < 1 || scale == 0.0)
    throw Error("'" + path + "' is not a valid PFM file");
  in.get();
  const int c = magic == "PF" ? 3 : 1;
  const bool little = scale < 0.0;
  std::vector<float> raw(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)))
    throw Error("'" + path + "': truncated PFM data");
  if (little != (std::endian::native == std::endian::little))
    for (float& v : raw) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&v, &u, 4);
    }
  Image img(w, h, c);
  // PFM stores the bottom row first.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        img.at(x, y, k) = raw[(static_cast<std::size_t>(h - 1 - y) * w + x) * c + k];
  return img;
}

void write_pfm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw Error("write_pfm: PFM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n"
      << (std::endian::native == std::endian::little ? "-1.0" : "1.0") << "\n";
  std::vector<float> raw(image.pixels.size());
  const int c = image.channels;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int k = 0; k < c; ++k)
        raw[(static_cast<std::size_t>(image.height - 1 - y) * image.width + x) * c + k] =
            static_cast<float>(image.at(x, y, k));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw Error("failed writing '" + path + "'");
}

Image read_image(const std::string& path) {
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    if (path.size() < n) return false;
    std::string tail = path.substr(path.size() - n);
    std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return tail == ext;
  };
  if (ends_with(".png")) return read_png(path);
  if (ends_with(".pfm")) return read_pfm(path);
  throw Error("unsupported image format: '" + path + "'");
}

Matrix to_grayscale(const Image& image) {
  if (image.channels == 1 || image.channels == 2) return image.channel(0);
  if (image.channels < 3) throw Error("to_grayscale: empty image");
  Matrix g(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      g(y, x) = 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) + 0.114 * image.at(x, y, 2);
  return g;
}

}  // namespace stereops
