#include "textdet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "textdet/errors.hpp"

namespace textdet {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int read_pnm_token(std::istream& is) {
  // Skips whitespace and '#' comments per PNM spec.
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v;
  if (!(is >> v)) throw IoError("malformed PNM header");
  return v;
}

Image read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  char magic[2];
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError(path + ": not a P5/P6 PNM file");
  }
  int channels = magic[1] == '6' ? 3 : 1;
  int w = read_pnm_token(f);
  int h = read_pnm_token(f);
  int maxval = read_pnm_token(f);
  if (maxval != 255) throw IoError(path + ": only 8-bit PNM supported");
  f.get();  // single whitespace before raster
  Image img(w, h, channels);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError(path + ": truncated raster");
  return img;
}

void write_pnm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << (img.channels == 3 ? "P6" : "P5") << "\n"
    << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("short write to " + path);
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

Image read_png(const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot read " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": png decode failed");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": unsupported channel count");
  }
  Image img(w, h, channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * w * channels;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image& img, const std::string& path) {
  std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": png encode failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
        img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot read " + path);
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  probe.close();
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm(path);
  return read_png(path);
}

void write_image(const Image& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0) throw IoError("empty image");
  if (ends_with(path, ".png")) {
    write_png(img, path);
  } else {
    write_pnm(img, path);
  }
}

Image resize(const Image& img, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0) throw IoError("bad resize target");
  if (new_w == img.width && new_h == img.height) return img;
  // Separable box filter: each destination pixel averages the exact source
  // span it covers. Equivalent to bilinear for mild upscales, alias-free for
  // the deep downscales.
  Image out(new_w, new_h, img.channels);
  double sx = static_cast<double>(img.width) / new_w;
  double sy = static_cast<double>(img.height) / new_h;
  std::vector<double> acc(static_cast<size_t>(img.channels));
  for (int oy = 0; oy < new_h; ++oy) {
    double y0 = oy * sy, y1 = (oy + 1) * sy;
    int iy0 = static_cast<int>(std::floor(y0));
    int iy1 = std::min(img.height, static_cast<int>(std::ceil(y1)));
    for (int ox = 0; ox < new_w; ++ox) {
      double x0 = ox * sx, x1 = (ox + 1) * sx;
      int ix0 = static_cast<int>(std::floor(x0));
      int ix1 = std::min(img.width, static_cast<int>(std::ceil(x1)));
      std::fill(acc.begin(), acc.end(), 0.0);
      double total = 0.0;
      for (int iy = iy0; iy < iy1; ++iy) {
        double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
        for (int ix = ix0; ix < ix1; ++ix) {
          double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
          double w = wx * wy;
          total += w;
          for (int c = 0; c < img.channels; ++c) acc[static_cast<size_t>(c)] += w * img.at(ix, iy, c);
        }
      }
      for (int c = 0; c < img.channels; ++c) {
        double v = acc[static_cast<size_t>(c)] / total;
        out.at(ox, oy, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image rotate_image(const Image& img, Rotation rot) {
  if (rot == Rotation::None) return img;
  bool swap = rot == Rotation::Quarter || rot == Rotation::ThreeQuarter;
  Image out(swap ? img.height : img.width, swap ? img.width : img.height, img.channels);
  // Pixel mapping mirrors transform_point on pixel centers.
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int nx, ny;
      switch (rot) {
        case Rotation::Quarter:
          nx = img.height - 1 - y;
          ny = x;
          break;
        case Rotation::Half:
          nx = img.width - 1 - x;
          ny = img.height - 1 - y;
          break;
        default:  // ThreeQuarter
          nx = y;
          ny = img.width - 1 - x;
          break;
      }
      for (int c = 0; c < img.channels; ++c) out.at(nx, ny, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image crop_pad(const Image& img, int x0, int y0, int w, int h) {
  Image out(w, h, img.channels);
  int sy0 = std::max(0, y0), sy1 = std::min(img.height, y0 + h);
  int sx0 = std::max(0, x0), sx1 = std::min(img.width, x0 + w);
  for (int y = sy0; y < sy1; ++y) {
    if (sx1 <= sx0) break;
    const uint8_t* src = &img.pixels[(static_cast<size_t>(y) * img.width + sx0) * img.channels];
    uint8_t* dst = &out.pixels[(static_cast<size_t>(y - y0) * w + (sx0 - x0)) * img.channels];
    std::copy(src, src + static_cast<size_t>(sx1 - sx0) * img.channels, dst);
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({3, img.height, img.width});
  int64_t hw = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int64_t i = static_cast<int64_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) {
        int sc = img.channels == 3 ? c : 0;
        t[c * hw + i] = static_cast<float>(img.at(x, y, sc)) / 255.0f - 0.5f;
      }
    }
  }
  return t;
}

}  // namespace textdet
