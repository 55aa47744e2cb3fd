#include "pirf/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "pirf/common.hpp"

namespace pirf {
namespace {

std::uint32_t crc32_update(std::uint32_t crc, const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32(out, std::uint32_t(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, crc32_update(0, out.data() + start, out.size() - start));
}

// zlib stream holding stored (uncompressed) deflate blocks.
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> z = {0x78, 0x01};
  std::size_t off = 0;
  do {
    const std::size_t len = std::min<std::size_t>(raw.size() - off, 65535);
    z.push_back(off + len == raw.size() ? 1 : 0);  // BFINAL, BTYPE = 00
    z.push_back(std::uint8_t(len & 0xFF));
    z.push_back(std::uint8_t(len >> 8));
    z.push_back(std::uint8_t(~len & 0xFF));
    z.push_back(std::uint8_t((~len >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + long(off), raw.begin() + long(off + len));
    off += len;
  } while (off < raw.size());
  std::uint32_t a = 1, b = 0;  // adler32 of the raw payload
  for (std::uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_u32(z, (b << 16) | a);
  return z;
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
  require(width >= 1 && height >= 1, "write_png_gray: empty image");
  require(long(pixels.size()) == long(width) * height, "write_png_gray: pixel count mismatch");

  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, std::uint32_t(width));
  put_u32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace

  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(height) * (std::size_t(width) + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // per-scanline filter: none
    raw.insert(raw.end(), pixels.begin() + long(y) * width,
               pixels.begin() + long(y + 1) * width);
  }

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", zlib_stored(raw));
  put_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(png.data()), std::streamsize(png.size()));
  require(f.good(), "write_png_gray: cannot write " + path.string());
}

void save_sample_grid(const std::filesystem::path& path, const std::vector<Field<float>>& fields,
                      int channel, int tiles_per_row) {
  require(!fields.empty(), "save_sample_grid: no fields");
  require(tiles_per_row >= 1, "save_sample_grid: tiles_per_row must be >= 1");
  const int rows = fields[0].grid.plane_rows(), cols = fields[0].grid.plane_cols();
  for (const auto& f : fields) {
    require(channel >= 0 && channel < f.channels(), "save_sample_grid: channel out of range");
    require(f.grid.plane_rows() == rows && f.grid.plane_cols() == cols,
            "save_sample_grid: mixed field shapes");
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& f : fields) {
    lo = std::min(lo, double(f.ch[channel].minCoeff()));
    hi = std::max(hi, double(f.ch[channel].maxCoeff()));
  }
  const double span = hi - lo;

  const int n = int(fields.size());
  const int tile_cols = std::min(tiles_per_row, n);
  const int tile_rows = (n + tile_cols - 1) / tile_cols;
  const int W = tile_cols * (cols + 1) - 1;
  const int H = tile_rows * (rows + 1) - 1;
  std::vector<std::uint8_t> px(std::size_t(W) * H, 0);

  for (int i = 0; i < n; ++i) {
    const int ty = i / tile_cols, tx = i % tile_cols;
    const auto& a = fields[i].ch[channel];
    for (int y = 0; y < rows; ++y)
      for (int x = 0; x < cols; ++x) {
        const double v = span > 0 ? (double(a(y, x)) - lo) / span : 0.5;
        px[std::size_t(ty * (rows + 1) + y) * W + tx * (cols + 1) + x] =
            std::uint8_t(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      }
  }
  write_png_gray(path, W, H, px);
}

}  // namespace pirf
