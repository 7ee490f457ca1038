#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "livestyle/image.hpp"

namespace livestyle::image {
namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

RawImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw CorruptImage(std::string("png: ") + img.message);
  // Read as RGBA so alpha can be discarded rather than composited.
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgba.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw CorruptImage("png: " + msg);
  }
  RawImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(out.width * out.height * 3);
  for (std::size_t p = 0; p < out.width * out.height; ++p)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[p * 3 + c] = rgba[p * 4 + c];
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

RawImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  jerr.pub.emit_message = jpeg_silence;
  RawImage out;
  // No C++ objects with non-trivial destructors may be created between
  // setjmp and the last libjpeg call except `out`, which outlives the jump.
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw CorruptImage(std::string("jpeg: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::vector<std::uint8_t> encode_png(const RawImage& raw) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raw.width);
  img.height = static_cast<png_uint_32>(raw.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raw.pixels.data(), 0, nullptr))
    throw CorruptImage(std::string("png encode: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raw.pixels.data(), 0, nullptr))
    throw CorruptImage(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const RawImage& raw) {
  jpeg_compress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    throw CorruptImage(std::string("jpeg encode: ") + jerr.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &size);
  cinfo.image_width = static_cast<JDIMENSION>(raw.width);
  cinfo.image_height = static_cast<JDIMENSION>(raw.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(raw.pixels.data()) +
                   static_cast<std::size_t>(cinfo.next_scanline) * raw.width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buf, buf + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buf);
  return out;
}

}  // namespace

RawImage decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw UnsupportedFormat("input is neither PNG nor JPEG");
}

// Clip to [0,1], scale to [0,255], round half up.
RawImage quantize(const ImageTensor& t) {
  if (t.range != Range::unit) throw RangeMismatch("encode expects a UNIT tensor");
  RawImage raw;
  raw.width = t.width;
  raw.height = t.height;
  raw.pixels.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    float v = t.data[i];
    v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    raw.pixels[i] = static_cast<std::uint8_t>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
  }
  return raw;
}

std::vector<std::uint8_t> encode_image(const ImageTensor& t, Format format) {
  const RawImage raw = quantize(t);
  return format == Format::png ? encode_png(raw) : encode_jpeg(raw);
}

}  // namespace livestyle::image
