#include "proxyforge/image_io.hpp"

#include <png.h>

#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace proxyforge {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_read(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw UnreadableFile("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

FilePtr open_for_write(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string() + ": " + std::strerror(errno));
  return f;
}

struct PngErrorState {
  std::string message;
};

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  if (state) state->message = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

enum class PngMode { kRgb8, kGray16, kIndexed };

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bytes_per_sample = 1;
  std::vector<std::uint8_t> bytes;
};

// Classic libpng read. The caller picks a mode; kRgb8 normalizes everything
// to 8-bit gray or RGB.
DecodedPng read_png(std::FILE* fp, const fs::path& path, PngMode mode) {
  PngErrorState err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed for " + path.string());
  }
  DecodedPng out;
  std::vector<png_bytep> rows;
  bool header_done = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (!header_done) throw CorruptHeader("corrupt PNG header in " + path.string() + ": " + err.message);
    throw FormatError("corrupt PNG data in " + path.string() + ": " + err.message);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  header_done = true;

  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (mode == PngMode::kRgb8) {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (bit_depth == 16) png_set_scale_16(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_packing(png);
  } else if (mode == PngMode::kGray16) {
    if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 16) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw UnsupportedFormat(path.string() + ": expected a 16-bit grayscale PNG");
    }
    png_set_swap(png);  // little-endian host order
  } else {
    if (color_type == PNG_COLOR_TYPE_PALETTE || (color_type == PNG_COLOR_TYPE_GRAY && bit_depth <= 8)) {
      png_set_packing(png);
    } else {
      png_destroy_read_struct(&png, &info, nullptr);
      throw UnsupportedFormat(path.string() + ": expected a palette or 8-bit gray PNG");
    }
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bytes_per_sample = png_get_bit_depth(png, info) == 16 ? 2 : 1;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.bytes.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const fs::path& path, int width, int height, int color_type, int bit_depth,
               const std::uint8_t* data, std::size_t rowbytes, std::span<const std::uint8_t> palette) {
  FilePtr fp = open_for_write(path);
  PngErrorState err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for " + path.string());
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed for " + path.string() + ": " + err.message);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> pal;
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    pal.resize(palette.size() / 3);
    for (std::size_t i = 0; i < pal.size(); ++i) {
      pal[i] = png_color{palette[3 * i], palette[3 * i + 1], palette[3 * i + 2]};
    }
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  }
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(data + rowbytes * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// --- PNM -----------------------------------------------------------------

class PnmHeaderReader {
 public:
  PnmHeaderReader(std::istream& in, const fs::path& path) : in_(in), path_(path) {}

  unsigned long next_number() {
    skip_space_and_comments();
    unsigned long v = 0;
    int digits = 0;
    while (std::isdigit(in_.peek())) {
      v = v * 10 + static_cast<unsigned long>(in_.get() - '0');
      if (++digits > 9) throw CorruptHeader(path_.string() + ": PNM header number too long");
    }
    if (digits == 0) throw CorruptHeader(path_.string() + ": malformed PNM header");
    return v;
  }

 private:
  void skip_space_and_comments() {
    for (;;) {
      const int c = in_.peek();
      if (c == '#') {
        while (in_.peek() != '\n' && in_.peek() != EOF) in_.get();
      } else if (std::isspace(c)) {
        in_.get();
      } else {
        return;
      }
    }
  }

  std::istream& in_;
  const fs::path& path_;
};

RasterImage read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '3' && magic[1] != '5' && magic[1] != '6')) {
    throw UnsupportedFormat(path.string() + ": unsupported PNM variant");
  }
  const bool ascii = magic[1] == '2' || magic[1] == '3';
  const int channels = (magic[1] == '3' || magic[1] == '6') ? 3 : 1;
  PnmHeaderReader hdr(in, path);
  const unsigned long w = hdr.next_number();
  const unsigned long h = hdr.next_number();
  const unsigned long maxval = hdr.next_number();
  if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16 || maxval == 0 || maxval > 65535) {
    throw CorruptHeader(path.string() + ": invalid PNM dimensions or maxval");
  }
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  std::vector<std::uint8_t> data(n);
  auto rescale = [maxval](unsigned long v) -> std::uint8_t {
    if (maxval == 255) return static_cast<std::uint8_t>(v);
    return static_cast<std::uint8_t>(std::lround(static_cast<double>(v) * 255.0 / maxval));
  };
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      unsigned long v = 0;
      try {
        v = hdr.next_number();
      } catch (const CorruptHeader&) {
        throw FormatError(path.string() + ": truncated ASCII PNM data");
      }
      if (v > maxval) throw FormatError(path.string() + ": PNM sample exceeds maxval");
      data[i] = rescale(v);
    }
  } else {
    in.get();  // single whitespace after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    std::vector<std::uint8_t> raw(n * bps);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw FormatError(path.string() + ": truncated PNM data");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned long v = bps == 2 ? (static_cast<unsigned long>(raw[2 * i]) << 8) | raw[2 * i + 1]
                                       : raw[i];
      if (v > maxval) throw FormatError(path.string() + ": PNM sample exceeds maxval");
      data[i] = rescale(v);
    }
  }
  return RasterImage(static_cast<int>(w), static_cast<int>(h), channels, std::move(data));
}

}  // namespace

RasterImage load_raster(const fs::path& path) {
  FilePtr fp = open_for_read(path);
  std::array<unsigned char, 8> sig{};
  const std::size_t got = std::fread(sig.data(), 1, sig.size(), fp.get());
  if (got >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) {
    std::rewind(fp.get());
    DecodedPng png = read_png(fp.get(), path, PngMode::kRgb8);
    if (png.channels != 1 && png.channels != 3) {
      throw UnsupportedFormat(path.string() + ": unexpected PNG channel layout");
    }
    return RasterImage(png.width, png.height, png.channels, std::move(png.bytes));
  }
  if (got >= 2 && sig[0] == 'P' && std::strchr("2356", sig[1]) != nullptr && sig[1] != 0) {
    fp.reset();
    return read_pnm(path);
  }
  if (got < 2) throw CorruptHeader(path.string() + ": file too short to identify");
  throw UnsupportedFormat(path.string() + ": not a PNG or PGM/PPM file");
}

void save_png(const RasterImage& image, const fs::path& path) {
  const int ct = image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  write_png(path, image.width(), image.height(), ct, 8, image.data().data(),
            static_cast<std::size_t>(image.width()) * image.channels(), {});
}

void save_pnm(const RasterImage& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels() == 3 ? "P6" : "P5") << '\n'
      << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void save_png_gray16(const Gray16Image& image, const fs::path& path) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw InvalidArgument("gray16 image data length mismatch");
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16,
            reinterpret_cast<const std::uint8_t*>(image.data.data()),
            static_cast<std::size_t>(image.width) * 2, {});
}

Gray16Image load_png_gray16(const fs::path& path) {
  FilePtr fp = open_for_read(path);
  DecodedPng png = read_png(fp.get(), path, PngMode::kGray16);
  Gray16Image out{png.width, png.height, {}};
  out.data.resize(static_cast<std::size_t>(png.width) * png.height);
  std::memcpy(out.data.data(), png.bytes.data(), out.data.size() * 2);
  return out;
}

void save_png_indexed(const IndexedImage& image, std::span<const std::uint8_t> palette_rgb,
                      const fs::path& path) {
  if (image.indices.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw InvalidArgument("indexed image data length mismatch");
  }
  if (palette_rgb.size() != 256 * 3) throw InvalidArgument("palette must have 256 RGB entries");
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_PALETTE, 8, image.indices.data(),
            static_cast<std::size_t>(image.width), palette_rgb);
}

IndexedImage load_png_indexed(const fs::path& path) {
  FilePtr fp = open_for_read(path);
  DecodedPng png = read_png(fp.get(), path, PngMode::kIndexed);
  if (png.channels != 1) throw UnsupportedFormat(path.string() + ": expected one index channel");
  return IndexedImage{png.width, png.height, std::move(png.bytes)};
}

std::vector<std::uint8_t> voc_palette() {
  std::vector<std::uint8_t> pal(256 * 3, 0);
  for (int i = 0; i < 256; ++i) {
    int c = i;
    int r = 0, g = 0, b = 0;
    for (int j = 0; j < 8; ++j) {
      r |= ((c >> 0) & 1) << (7 - j);
      g |= ((c >> 1) & 1) << (7 - j);
      b |= ((c >> 2) & 1) << (7 - j);
      c >>= 3;
    }
    pal[3 * i] = static_cast<std::uint8_t>(r);
    pal[3 * i + 1] = static_cast<std::uint8_t>(g);
    pal[3 * i + 2] = static_cast<std::uint8_t>(b);
  }
  return pal;
}

}  // namespace proxyforge
