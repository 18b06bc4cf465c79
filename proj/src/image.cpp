#include "ctok/image.hpp"

#include "ctok/error.hpp"
#include "ctok/util.hpp"

#include <png.h>

#include <cstring>
#include <memory>

namespace ctok {

Image decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::BadImage, std::string("png decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::BadImage, std::string("png decode failed: ") + img.message);
  }
  return out;
}

Image read_png(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::BadImage, "cannot read image " + path.string());
  }
  return decode_png(bytes);
}

std::string encode_png(const Image& image) {
  if (!image.valid()) throw Error(ErrorCode::BadImage, "invalid image buffer");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("png encode failed: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png(image));
}

std::string image_fingerprint(const Image& image) {
  std::string header = std::to_string(image.width) + "x" + std::to_string(image.height) + ":";
  header.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return sha256_hex(header);
}

}  // namespace ctok
