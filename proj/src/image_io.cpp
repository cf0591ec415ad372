#include "ssecam/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "ssecam/errors.hpp"

namespace ssecam {
namespace {

void write_netpbm(const std::filesystem::path& path, const Raster8& image, const char* magic,
                  int channels) {
  if (image.channels != channels ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * channels) {
    throw std::invalid_argument("netpbm write: raster does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << magic << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Reads one header integer, skipping whitespace and '#' comments.
int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("malformed netpbm header in " + path.string());
  long value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 20) throw IoError("netpbm dimension too large in " + path.string());
    c = in.get();
  }
  if (c == EOF || !std::isspace(c)) throw IoError("malformed netpbm header in " + path.string());
  return static_cast<int>(value);
}

Raster8 read_netpbm(const std::filesystem::path& path, const char* magic, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char m[2] = {0, 0};
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1]) {
    throw IoError("expected " + std::string(magic) + " header in " + path.string());
  }
  Raster8 image;
  image.channels = channels;
  image.width = read_header_int(in, path);
  image.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (image.width < 1 || image.height < 1 || maxval != 255) {
    throw IoError("unsupported netpbm geometry or maxval in " + path.string());
  }
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * channels);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    throw IoError("truncated pixel data in " + path.string());
  }
  return image;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Raster8& image) {
  write_netpbm(path, image, "P6", 3);
}

void write_pgm(const std::filesystem::path& path, const Raster8& image) {
  write_netpbm(path, image, "P5", 1);
}

Raster8 read_ppm(const std::filesystem::path& path) { return read_netpbm(path, "P6", 3); }

Raster8 read_pgm(const std::filesystem::path& path) { return read_netpbm(path, "P5", 1); }

}  // namespace ssecam
