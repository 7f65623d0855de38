#include "dreambox/image.hpp"

#include "dreambox/error.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

namespace dreambox {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("image", "io_error", "cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct JpegErrorManager
{
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RgbImage decode_jpeg(std::span<const std::uint8_t> bytes)
{
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  RgbImage image;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error("image", "decode_error", std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  image = RgbImage(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = image.at(0, static_cast<int>(cinfo.output_scanline));
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return image;
}

} // namespace

RgbImage decode_png(std::span<const std::uint8_t> bytes)
{
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw Error("image", "decode_error", std::string("PNG decode failed: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error("image", "decode_error", std::string("PNG decode failed: ") + img.message);
  }
  return image;
}

std::vector<std::uint8_t> encode_png(const RgbImage& image)
{
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw Error("image", "encode_error", std::string("PNG encode failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw Error("image", "encode_error", std::string("PNG encode failed: ") + img.message);
  out.resize(size);
  return out;
}

RgbImage read_image(const std::filesystem::path& path)
{
  const auto bytes = read_bytes(path);
  static constexpr std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin()))
    return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8)
    return decode_jpeg(bytes);
  throw Error("image", "decode_error", "unsupported image format: " + path.string());
}

void write_png(const RgbImage& image, const std::filesystem::path& path)
{
  const auto bytes = encode_png(image);
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("image", "io_error", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw Error("image", "io_error", "short write to " + path.string());
}

RgbImage resample_region(const RgbImage& image, double x0, double y0, double x1, double y1, int out_w, int out_h)
{
  RgbImage out(out_w, out_h);
  const double sx = (x1 - x0) / out_w;
  const double sy = (y1 - y0) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp(y0 + (oy + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int iy = static_cast<int>(fy);
    const int iy1 = std::min(iy + 1, image.height - 1);
    const double ty = fy - iy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp(x0 + (ox + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int ix = static_cast<int>(fx);
      const int ix1 = std::min(ix + 1, image.width - 1);
      const double tx = fx - ix;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - ty) * ((1 - tx) * image.at(ix, iy)[c] + tx * image.at(ix1, iy)[c]) +
                         ty * ((1 - tx) * image.at(ix, iy1)[c] + tx * image.at(ix1, iy1)[c]);
        out.at(ox, oy)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

} // namespace dreambox
