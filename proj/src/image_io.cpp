#include "cvos/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <csetjmp>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include <jpeglib.h>

namespace cvos::image {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

// Reads a PNG with the given transforms applied; `setup` runs after
// png_read_info and may register transforms.
template <class Setup>
std::vector<std::uint8_t> read_png_rows(const std::filesystem::path& path, int& h, int& w,
                                        int& channels, int& color_type, Setup setup) {
  FilePtr f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("PNG read error in " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  color_type = png_get_color_type(png, info);
  setup(png, info, color_type);
  png_read_update_info(png, info);
  h = static_cast<int>(png_get_image_height(png, info));
  w = static_cast<int>(png_get_image_width(png, info));
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * static_cast<std::size_t>(h));
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = data.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return data;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0, ch = 0, ct = 0;
  auto data = read_png_rows(path, h, w, ch, ct, [](png_structp png, png_infop info, int color) {
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  });
  if (ch != 3) throw std::runtime_error("unsupported PNG layout in " + path.string());
  return RgbImage{h, w, std::move(data)};
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage read_jpeg_rgb(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  RgbImage img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("JPEG read error in " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.height = static_cast<int>(cinfo.output_height);
  img.width = static_cast<int>(cinfo.output_width);
  img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

void write_png(const std::filesystem::path& path, int h, int w, int color_type,
               const std::vector<std::uint8_t>& data, int bytes_per_pixel,
               const Palette* palette) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_color> colors;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write error in " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  if (palette) {
    for (const auto& c : *palette) colors.push_back(png_color{c[0], c[1], c[2]});
    png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  }
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(w) * bytes_per_pixel;
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(data.data() + stride * y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

const Palette& davis_palette() {
  static const Palette palette = [] {
    Palette p(256);
    for (int i = 0; i < 256; ++i) {
      int r = 0, g = 0, b = 0, c = i;
      for (int j = 0; j < 8; ++j) {
        r |= ((c >> 0) & 1) << (7 - j);
        g |= ((c >> 1) & 1) << (7 - j);
        b |= ((c >> 2) & 1) << (7 - j);
        c >>= 3;
      }
      p[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                        static_cast<std::uint8_t>(b)};
    }
    return p;
  }();
  return palette;
}

RgbImage read_rgb(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing image " + path.string());
  return has_png_signature(path) ? read_png_rgb(path) : read_jpeg_rgb(path);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  if (img.rgb.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
    throw std::invalid_argument("write_png_rgb: buffer does not match HxWx3");
  }
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_RGB, img.rgb, 3, nullptr);
}

IndexedImage read_indexed_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing image " + path.string());
  int h = 0, w = 0, ch = 0, ct = 0;
  auto data = read_png_rows(path, h, w, ch, ct, [](png_structp png, png_infop info, int color) {
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
    if (color == PNG_COLOR_TYPE_GRAY_ALPHA || color == PNG_COLOR_TYPE_RGB_ALPHA) {
      png_set_strip_alpha(png);
    }
  });
  IndexedImage out{h, w, {}};
  if (ch == 1) {
    out.index = std::move(data);
    return out;
  }
  if (ch != 3) throw std::runtime_error("unsupported annotation layout in " + path.string());
  std::map<std::array<std::uint8_t, 3>, std::uint8_t> lookup;
  const Palette& pal = davis_palette();
  for (std::size_t i = 0; i < pal.size(); ++i) lookup.emplace(pal[i], static_cast<std::uint8_t>(i));
  out.index.resize(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < out.index.size(); ++i) {
    std::array<std::uint8_t, 3> c{data[3 * i], data[3 * i + 1], data[3 * i + 2]};
    auto it = lookup.find(c);
    if (it == lookup.end()) {
      throw std::runtime_error("annotation colour not in palette in " + path.string());
    }
    out.index[i] = it->second;
  }
  return out;
}

void write_indexed_png(const std::filesystem::path& path, const IndexedImage& img,
                       const Palette& palette) {
  if (img.index.size() != static_cast<std::size_t>(img.height) * img.width) {
    throw std::invalid_argument("write_indexed_png: buffer does not match HxW");
  }
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_PALETTE, img.index, 1, &palette);
}

}  // namespace cvos::image
