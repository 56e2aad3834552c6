#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "cgn/image.hpp"

namespace cgn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
  throw std::runtime_error(std::string(what) + ": " + path.string());
}

}  // namespace

ImageU8 read_png_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "PNG decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize anything we might be handed to 8-bit grayscale.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  ImageU8 img(static_cast<int>(png_get_image_height(png, info)),
              static_cast<int>(png_get_image_width(png, info)));
  std::vector<png_bytep> rows(static_cast<size_t>(img.rows));
  for (int r = 0; r < img.rows; ++r)
    rows[static_cast<size_t>(r)] = img.px.data() + static_cast<size_t>(r) * img.cols;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace {

void write_png(const std::filesystem::path& path, int rows, int cols, int color_type,
               const std::uint8_t* data, size_t stride) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open PNG for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "PNG encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < rows; ++r)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<size_t>(r) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const ImageU8& img) {
  write_png(path, img.rows, img.cols, PNG_COLOR_TYPE_GRAY, img.px.data(),
            static_cast<size_t>(img.cols));
}

void write_png_rgb(const std::filesystem::path& path, const ImageRGB& img) {
  write_png(path, img.rows, img.cols, PNG_COLOR_TYPE_RGB, img.px.data(),
            static_cast<size_t>(img.cols) * 3);
}

ImageU16 read_raw14(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open raw14 file");
  std::string magic;
  int rows = 0, cols = 0;
  in >> magic >> rows >> cols;
  if (magic != "R14" || rows <= 0 || cols <= 0) fail(path, "bad raw14 header");
  in.get();  // newline after header
  ImageU16 img(rows, cols);
  in.read(reinterpret_cast<char*>(img.px.data()),
          static_cast<std::streamsize>(img.px.size() * sizeof(std::uint16_t)));
  if (!in) fail(path, "truncated raw14 file");
  return img;
}

void write_raw14(const std::filesystem::path& path, const ImageU16& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open raw14 file for writing");
  out << "R14\n" << img.rows << ' ' << img.cols << '\n';
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size() * sizeof(std::uint16_t)));
}

}  // namespace cgn
