#include "adelta/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "adelta/error.hpp"

namespace adelta {
namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes->data() + cur->offset, length);
  cur->offset += length;
}

void png_error_throw(png_structp, png_const_charp msg) { throw Error(ErrorCode::IoError, msg); }
void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw Error(ErrorCode::InvalidArgument, "PNG encoder supports gray or RGB only");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw Error(ErrorCode::ShapeMismatch, "pixel buffer does not match image size");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                            png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = img.width * img.channels;
    for (std::size_t y = 0; y < img.height; ++y)
      png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw Error(ErrorCode::IoError, "not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                           png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  Image8 img;
  try {
    ReadCursor cur{&bytes, 0};
    png_set_read_fn(png, &cur, png_read_from_vector);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.channels = png_get_channels(png, info);
    img.pixels.resize(img.width * img.height * img.channels);
    const std::size_t stride = img.width * img.channels;
    for (std::size_t y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + y * stride, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image8 render_sample(const Sample& s, std::size_t block) {
  if (block == 0) throw Error(ErrorCode::InvalidArgument, "block size must be positive");
  const auto& sh = s.shape;
  Image8 img;
  img.width = sh.width * block;
  img.height = sh.height * block;
  img.channels = sh.channels == 3 ? 3 : 1;
  img.pixels.assign(img.width * img.height * img.channels, 0);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = s.values[((y / block) * sh.width + x / block) * sh.channels + c];
        const double mapped = std::round(127.5 * (std::tanh(v / 4.0) + 1.0));
        img.pixels[(y * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::clamp(mapped, 0.0, 255.0));
      }
    }
  }
  return img;
}

Sample decode_sample(const Image8& img, ImageShape shape) {
  if (img.width == 0 || img.height == 0) throw Error(ErrorCode::ShapeMismatch, "empty image");
  Sample raw(ImageShape{img.height, img.width, shape.channels});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < shape.channels; ++c) {
        const std::size_t src_c = img.channels == 1 ? 0 : std::min(c, img.channels - 1);
        raw.values[(y * img.width + x) * shape.channels + c] =
            img.pixels[(y * img.width + x) * img.channels + src_c];
      }

  Sample pooled(shape);
  if (img.height % shape.height == 0 && img.width % shape.width == 0) {
    const std::size_t by = img.height / shape.height;
    const std::size_t bx = img.width / shape.width;
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < shape.channels; ++c)
          pooled.values[((y / by) * shape.width + x / bx) * shape.channels + c] +=
              raw.values[(y * img.width + x) * shape.channels + c];
    for (auto& v : pooled.values) v /= static_cast<double>(by * bx);
  } else {
    pooled = resize_bilinear(raw, shape.height, shape.width);
  }
  for (auto& v : pooled.values) {
    const double u = std::clamp(v / 127.5 - 1.0, -0.999, 0.999);
    v = 4.0 * std::atanh(u);
  }
  return pooled;
}

Sample resize_bilinear(const Sample& s, std::size_t height, std::size_t width) {
  const auto& sh = s.shape;
  if (height == 0 || width == 0) throw Error(ErrorCode::InvalidArgument, "resize target is empty");
  Sample out(ImageShape{height, width, sh.channels});
  const double sy = static_cast<double>(sh.height) / static_cast<double>(height);
  const double sx = static_cast<double>(sh.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(sh.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, sh.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(sh.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, sh.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < sh.channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return s.values[(yy * sh.width + xx) * sh.channels + c]; };
        const double top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
        const double bot = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
        out.values[(y * width + x) * sh.channels + c] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

}  // namespace adelta
