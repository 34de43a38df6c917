#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pmrf/error.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf::harness {

// Dataset synthesis and ingestion.  Synthetic sets stand in for photo
// corpora at desk scale; the IDX reader lets real u8 image files in.

enum class DatasetKind { sprites, two_moons, gauss1d };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::sprites: return "sprites";
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::gauss1d: return "gauss1d";
  }
  throw ValueError("to_string(DatasetKind)", "unknown kind value");
}

namespace harness_detail {

constexpr std::size_t kSpriteSide = 16;

// One 16x16x3 sprite: a dim background with 1-3 solid discs or rectangles
// painted over it.  Every draw happens in a fixed order so the image is a
// pure function of the stream.
inline Tensor sprite_image(RandomStream& rng) {
  const std::size_t side = kSpriteSide;
  Tensor img({side, side, 3});
  const double bg = 0.05 + 0.15 * rng.next_uniform();
  std::fill(img.data().begin(), img.data().end(), bg);

  const std::size_t shapes = 1 + rng.next_below(3);
  for (std::size_t s = 0; s < shapes; ++s) {
    double color[3];
    for (double& ch : color) ch = 0.2 + 0.8 * rng.next_uniform();
    const bool disc = rng.next_below(2) == 0;
    auto paint = [&](std::size_t yy, std::size_t xx) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.at(yy, xx, ch) = color[ch];
      }
    };
    if (disc) {
      const double cx = side * rng.next_uniform();
      const double cy = side * rng.next_uniform();
      const double r = 2.0 + 4.0 * rng.next_uniform();
      for (std::size_t yy = 0; yy < side; ++yy) {
        for (std::size_t xx = 0; xx < side; ++xx) {
          const double dx = xx + 0.5 - cx;
          const double dy = yy + 0.5 - cy;
          if (dx * dx + dy * dy <= r * r) paint(yy, xx);
        }
      }
    } else {
      const double x0 = (side - 4) * rng.next_uniform();
      const double y0 = (side - 4) * rng.next_uniform();
      const double wd = 2.0 + 6.0 * rng.next_uniform();
      const double ht = 2.0 + 6.0 * rng.next_uniform();
      for (std::size_t yy = 0; yy < side; ++yy) {
        for (std::size_t xx = 0; xx < side; ++xx) {
          if (xx + 0.5 >= x0 && xx + 0.5 < x0 + wd && yy + 0.5 >= y0 &&
              yy + 0.5 < y0 + ht) {
            paint(yy, xx);
          }
        }
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// One point from the interleaved two-moons pair with 0.05 jitter.
inline Tensor two_moons_point(RandomStream& rng) {
  const std::size_t moon = rng.next_below(2);
  const double theta = M_PI * rng.next_uniform();
  double px = std::cos(theta);
  double py = std::sin(theta);
  if (moon == 1) {
    px = 1.0 - px;
    py = 0.5 - py;
  }
  px += 0.05 * rng.next_normal();
  py += 0.05 * rng.next_normal();
  Tensor out({2});
  out[0] = px;
  out[1] = py;
  return out;
}

}  // namespace harness_detail

// Draws n items of the requested kind.  Each item gets its own child stream,
// so the dataset is a pure function of (kind, n, key) and any prefix of it is
// stable under growing n.
inline std::vector<Tensor> synth_dataset(DatasetKind kind, std::size_t n,
                                         const RngKey& key) {
  if (n == 0) throw ValueError("synth_dataset", "n must be >= 1");
  const RngKey base = key.child(to_string(kind));
  std::vector<Tensor> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng(base.child(i));
    switch (kind) {
      case DatasetKind::sprites:
        items.push_back(harness_detail::sprite_image(rng));
        break;
      case DatasetKind::two_moons:
        items.push_back(harness_detail::two_moons_point(rng));
        break;
      case DatasetKind::gauss1d: {
        Tensor t({1});
        t[0] = rng.next_normal();
        items.push_back(std::move(t));
        break;
      }
    }
  }
  return items;
}

namespace harness_detail {

inline std::uint32_t read_be_u32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

inline void append_be_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

}  // namespace harness_detail

// Reads an IDX file of unsigned-byte images: magic 0x00000803 ([n, H, W],
// returned as [H, W, 1] tensors) or 0x00000804 ([n, H, W, C], returned as
// [H, W, C]).  Byte values are rescaled to [0, 1].
inline std::vector<Tensor> load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_idx", "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 4) {
    throw IoError("load_idx", "truncated magic in " + path.string());
  }
  const std::uint32_t magic = harness_detail::read_be_u32(p);
  if (magic != 0x00000803u && magic != 0x00000804u) {
    throw IoError("load_idx", "bad magic in " + path.string() +
                                  " (expected u8 images, 3 or 4 dims)");
  }
  const std::size_t ndims = magic & 0xFF;
  if (bytes.size() < 4 + 4 * ndims) {
    throw IoError("load_idx", "truncated dimension header in " + path.string());
  }
  std::vector<std::size_t> dims(ndims);
  std::size_t payload = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    dims[i] = harness_detail::read_be_u32(p + 4 + 4 * i);
    if (dims[i] == 0) {
      throw IoError("load_idx", "zero dimension in " + path.string());
    }
    if (payload > (std::size_t{1} << 40) / dims[i]) {
      throw IoError("load_idx", "implausibly large payload in " + path.string());
    }
    payload *= dims[i];
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header + payload) {
    throw IoError("load_idx", "truncated payload in " + path.string());
  }
  if (bytes.size() > header + payload) {
    throw IoError("load_idx", "trailing bytes in " + path.string());
  }

  const std::size_t n = dims[0];
  const std::size_t h = dims[1];
  const std::size_t w = dims[2];
  const std::size_t c = ndims == 4 ? dims[3] : 1;
  std::vector<Tensor> items;
  items.reserve(n);
  const unsigned char* cursor = p + header;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img({h, w, c});
    for (std::size_t j = 0; j < h * w * c; ++j) {
      img[j] = static_cast<double>(cursor[j]) / 255.0;
    }
    cursor += h * w * c;
    items.push_back(std::move(img));
  }
  return items;
}

// Writes items as a u8 IDX file (the load_idx inverse up to quantization).
// All items must share one shape: [H, W] or [H, W, 1] write the three-dim
// form, [H, W, C>1] the four-dim form.  Values are clamped to [0, 1].
inline void save_idx(const std::filesystem::path& path,
                     const std::vector<Tensor>& items) {
  if (items.empty()) throw ValueError("save_idx", "need >= 1 item");
  const Tensor& first = items.front();
  if (first.rank() != 2 && first.rank() != 3) {
    throw ShapeError("save_idx", "items must be [H, W] or [H, W, C]");
  }
  const std::size_t h = first.shape()[0];
  const std::size_t w = first.shape()[1];
  const std::size_t c = first.rank() == 3 ? first.shape()[2] : 1;
  for (const Tensor& t : items) {
    if (!t.same_shape(first)) {
      throw ShapeError("save_idx", "all items must share one shape");
    }
  }

  std::string blob;
  blob.reserve(4 + 16 + items.size() * h * w * c);
  harness_detail::append_be_u32(blob, c == 1 ? 0x00000803u : 0x00000804u);
  harness_detail::append_be_u32(blob, static_cast<std::uint32_t>(items.size()));
  harness_detail::append_be_u32(blob, static_cast<std::uint32_t>(h));
  harness_detail::append_be_u32(blob, static_cast<std::uint32_t>(w));
  if (c != 1) {
    harness_detail::append_be_u32(blob, static_cast<std::uint32_t>(c));
  }
  for (const Tensor& t : items) {
    for (double v : t.data()) {
      const long long q = std::llround(std::clamp(v, 0.0, 1.0) * 255.0);
      blob.push_back(static_cast<char>(static_cast<unsigned char>(q)));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_idx", "cannot open " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("save_idx", "write failed for " + path.string());
}

}  // namespace pmrf::harness
