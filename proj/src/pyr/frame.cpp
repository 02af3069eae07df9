#include "pyr/frame.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "util/errors.hpp"

namespace carfluents {

void Frame::clamp01() {
  for (int y = 0; y < intensity.height(); ++y)
    for (int x = 0; x < intensity.width(); ++x)
      intensity.at(x, y) = std::clamp(intensity.at(x, y), 0.0f, 1.0f);
}

namespace {

int read_pnm_int(std::istream& in) {
  // Skips whitespace and '#' comments.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) fail_parse("pgm: unexpected end of header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) fail_parse("pgm: expected integer in header");
  return value;
}

}  // namespace

Frame load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') fail_parse(path + ": not a binary PGM (P5)");
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    fail_parse(path + ": unsupported PGM geometry");
  Frame frame;
  frame.intensity = Grid2D<float>(w, h);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    if (!in) fail_parse(path + ": truncated pixel data");
    for (int x = 0; x < w; ++x)
      frame.intensity.at(x, y) = static_cast<float>(row[x]) / static_cast<float>(maxval);
  }
  return frame;
}

void save_pgm(const Frame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write " + path);
  const int w = frame.width();
  const int h = frame.height();
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(frame.intensity.at(x, y), 0.0f, 1.0f);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!out) fail_io("short write to " + path);
}

Grid2D<float> resize_bilinear(const Grid2D<float>& src, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0) fail_invalid("resize_bilinear: empty target");
  Grid2D<float> dst(new_w, new_h);
  const double sx = static_cast<double>(src.width()) / new_w;
  const double sy = static_cast<double>(src.height()) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    int y1 = std::min(y0 + 1, src.height() - 1);
    y0 = std::clamp(y0, 0, src.height() - 1);
    for (int x = 0; x < new_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      int x1 = std::min(x0 + 1, src.width() - 1);
      x0 = std::clamp(x0, 0, src.width() - 1);
      const double top = (1.0 - wx) * src.at(x0, y0) + wx * src.at(x1, y0);
      const double bot = (1.0 - wx) * src.at(x0, y1) + wx * src.at(x1, y1);
      dst.at(x, y) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return dst;
}

Grid2D<float> downsample_half(const Grid2D<float>& src) {
  const int w = (src.width() + 1) / 2;
  const int h = (src.height() + 1) / 2;
  Grid2D<float> dst(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx;
          const int sy = 2 * y + dy;
          if (sx < src.width() && sy < src.height()) {
            acc += src.at(sx, sy);
            ++count;
          }
        }
      }
      dst.at(x, y) = static_cast<float>(acc / count);
    }
  }
  return dst;
}

double mean_intensity(const Frame& frame, double x, double y, double w, double h) {
  const int x0 = std::max(0, static_cast<int>(std::floor(x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(y)));
  const int x1 = std::min(frame.width(), static_cast<int>(std::ceil(x + w)));
  const int y1 = std::min(frame.height(), static_cast<int>(std::ceil(y + h)));
  if (x1 <= x0 || y1 <= y0) return 0.0;
  double acc = 0.0;
  for (int py = y0; py < y1; ++py)
    for (int px = x0; px < x1; ++px) acc += frame.intensity.at(px, py);
  return acc / (static_cast<double>(x1 - x0) * (y1 - y0));
}

}  // namespace carfluents
