#include "slotlab/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "slotlab/common.hpp"

namespace slotlab {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png_impl(const std::string& path, const uint8_t* data, int h, int w,
                    int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(data + size_t(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png_impl(const std::string& path, int expect_channels,
                                   int* out_h, int* out_w) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  int w = png_get_image_width(png, info);
  int h = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (expect_channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  } else {
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  std::vector<uint8_t> data(size_t(h) * w * expect_channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = data.data() + size_t(y) * w * expect_channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  *out_h = h;
  *out_w = w;
  return data;
}

}  // namespace

void write_png_rgb(const std::string& path, const Image& img) {
  SLOTLAB_REQUIRE(img.ndim() == 3 && img.dim(2) == 3,
                  "write_png_rgb expects [H,W,3]");
  int h = (int)img.dim(0), w = (int)img.dim(1);
  std::vector<uint8_t> bytes(size_t(h) * w * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(img[i]);
  write_png_impl(path, bytes.data(), h, w, 3);
}

Image read_png_rgb(const std::string& path) {
  int h = 0, w = 0;
  auto bytes = read_png_impl(path, 3, &h, &w);
  Image img({h, w, 3});
  for (size_t i = 0; i < bytes.size(); ++i)
    img[i] = float(bytes[i]) / 255.f;
  return img;
}

void write_png_gray(const std::string& path, const LabelMap& labels) {
  SLOTLAB_REQUIRE(labels.ndim() == 2, "write_png_gray expects [H,W]");
  write_png_impl(path, labels.data(), (int)labels.dim(0), (int)labels.dim(1), 1);
}

LabelMap read_png_gray(const std::string& path) {
  int h = 0, w = 0;
  auto bytes = read_png_impl(path, 1, &h, &w);
  LabelMap labels({h, w});
  std::copy(bytes.begin(), bytes.end(), labels.begin());
  return labels;
}

}  // namespace slotlab
