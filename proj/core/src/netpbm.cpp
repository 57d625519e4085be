#include "inrattr/netpbm.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace inrattr {
namespace {

void skip_whitespace_and_comments(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_pnm_number(std::istream& in, const std::filesystem::path& path) {
  skip_whitespace_and_comments(in);
  std::size_t v = 0;
  if (!(in >> v)) {
    throw IoError("netpbm: malformed header in " + path.string());
  }
  return v;
}

void read_pnm_payload(std::istream& in, std::vector<std::uint8_t>& out,
                      const std::filesystem::path& path) {
  in.get();  // single whitespace byte after maxval
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.size())) {
    throw IoError("netpbm: truncated pixel data in " + path.string());
  }
}

std::uint8_t quantize(float v) {
  const float c = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("netpbm: cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("netpbm: write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("netpbm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("netpbm: expected P5 magic in " + path.string());
  GrayImage img;
  img.width = read_pnm_number(in, path);
  img.height = read_pnm_number(in, path);
  const std::size_t maxval = read_pnm_number(in, path);
  if (maxval != 255) throw IoError("netpbm: only maxval 255 supported, " + path.string());
  img.pixels.resize(img.width * img.height);
  read_pnm_payload(in, img.pixels, path);
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("netpbm: cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("netpbm: write failed for " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("netpbm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError("netpbm: expected P6 magic in " + path.string());
  RgbImage img;
  img.width = read_pnm_number(in, path);
  img.height = read_pnm_number(in, path);
  const std::size_t maxval = read_pnm_number(in, path);
  if (maxval != 255) throw IoError("netpbm: only maxval 255 supported, " + path.string());
  img.pixels.resize(3 * img.width * img.height);
  read_pnm_payload(in, img.pixels, path);
  return img;
}

RgbImage to_rgb8(const Tensor& image) {
  if (image.rank() != 3 || image.shape[0] != 3) {
    throw ShapeError("to_rgb8: want [3 x h x w]");
  }
  const std::size_t h = image.shape[1], w = image.shape[2], plane = h * w;
  RgbImage img{h, w, std::vector<std::uint8_t>(3 * plane)};
  for (std::size_t i = 0; i < plane; ++i) {
    img.pixels[3 * i + 0] = quantize(image.data[i]);
    img.pixels[3 * i + 1] = quantize(image.data[plane + i]);
    img.pixels[3 * i + 2] = quantize(image.data[2 * plane + i]);
  }
  return img;
}

TensorPtr from_rgb8(const RgbImage& img) {
  const std::size_t plane = img.height * img.width;
  auto t = tensor({3, img.height, img.width}, 0.0f, false);
  for (std::size_t i = 0; i < plane; ++i) {
    t->data[i] = img.pixels[3 * i + 0] / 255.0f;
    t->data[plane + i] = img.pixels[3 * i + 1] / 255.0f;
    t->data[2 * plane + i] = img.pixels[3 * i + 2] / 255.0f;
  }
  return t;
}

GrayImage to_gray8(const std::vector<float>& values, std::size_t h, std::size_t w) {
  if (values.size() != h * w) throw ShapeError("to_gray8: extent mismatch");
  GrayImage img{h, w, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < values.size(); ++i) img.pixels[i] = quantize(values[i]);
  return img;
}

std::vector<float> from_gray8(const GrayImage& img) {
  std::vector<float> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0f;
  return v;
}

}  // namespace inrattr
