#include "surjcycle/tiles/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/LU>
#include <Eigen/QR>

namespace surjcycle::tiles {
namespace {

constexpr const char* kFont[kDigits] = {
    ".###."
    "#...#"
    "#...#"
    "#...#"
    ".###.",
    "..#.."
    ".##.."
    "..#.."
    "..#.."
    ".###.",
    ".###."
    "#...#"
    "..##."
    ".#..."
    "#####",
    "####."
    "....#"
    ".###."
    "....#"
    "####.",
    "#..#."
    "#..#."
    "#####"
    "...#."
    "...#.",
    "#####"
    "#...."
    "####."
    "....#"
    "####.",
    ".###."
    "#...."
    "####."
    "#...#"
    ".###.",
    "#####"
    "....#"
    "...#."
    "..#.."
    "..#..",
    ".###."
    "#...#"
    ".###."
    "#...#"
    ".###.",
    ".###."
    "#...#"
    ".####"
    "....#"
    ".###.",
};

Index pixel(Index row, Index col) { return row * kSide + col; }

void check_digit(int digit) {
  if (digit < 0 || digit >= kDigits) throw ContractError("tiles: digit " + std::to_string(digit) + " out of range");
}

void check_position(int pos) {
  if (pos < 0 || pos >= kPositions) throw ContractError("tiles: border position " + std::to_string(pos) + " out of range");
}

DenseMatrix glyph_matrix(const GlyphSet& g) {
  DenseMatrix m(kGlyph * kGlyph, kDigits);
  for (Index d = 0; d < kDigits; ++d) {
    for (Index p = 0; p < kGlyph * kGlyph; ++p) m(p, d) = g.digits[static_cast<std::size_t>(d)][static_cast<std::size_t>(p)];
  }
  return m;
}

GlyphSet make_default() {
  GlyphSet g;
  for (std::size_t d = 0; d < kDigits; ++d) {
    for (std::size_t p = 0; p < kGlyph * kGlyph; ++p) g.digits[d][p] = kFont[d][p] == '#';
  }
  if (numerical_rank(glyph_matrix(g)) != kDigits) throw NumericalError("default_glyphs: glyph matrix is rank deficient");
  return g;
}

}  // namespace

Index GlyphSet::glyph_pixels(int digit) const {
  check_digit(digit);
  const auto& bits = digits[static_cast<std::size_t>(digit)];
  return static_cast<Index>(std::count(bits.begin(), bits.end(), true));
}

DenseVector GlyphSet::frame(int pos) const {
  check_position(pos);
  DenseVector out = DenseVector::Zero(kPixels);
  const Index r0 = (pos / 3) * kTile, c0 = (pos % 3) * kTile;
  for (Index k = 0; k < kTile; ++k) {
    out(pixel(r0, c0 + k)) = 1.0;
    out(pixel(r0 + kTile - 1, c0 + k)) = 1.0;
    out(pixel(r0 + k, c0)) = 1.0;
    out(pixel(r0 + k, c0 + kTile - 1)) = 1.0;
  }
  return out;
}

DenseVector GlyphSet::tiled_digit(int digit) const {
  check_digit(digit);
  DenseVector out = DenseVector::Zero(kPixels);
  const auto& bits = digits[static_cast<std::size_t>(digit)];
  for (Index t = 0; t < kPositions; ++t) {
    const Index r0 = (t / 3) * kTile + 1, c0 = (t % 3) * kTile + 1;
    for (Index r = 0; r < kGlyph; ++r) {
      for (Index c = 0; c < kGlyph; ++c) {
        if (bits[static_cast<std::size_t>(r * kGlyph + c)]) out(pixel(r0 + r, c0 + c)) = 1.0;
      }
    }
  }
  return out;
}

const GlyphSet& default_glyphs() {
  static const GlyphSet g = make_default();
  return g;
}

DenseVector render(int digit, int border_pos, const GlyphSet& glyphs) {
  return glyphs.tiled_digit(digit) + glyphs.frame(border_pos);
}

TileSystem build_affine_system(const GlyphSet& glyphs) {
  TileSystem s;
  s.a.resize(kPixels, kDigits);
  s.b.resize(kPixels, kPositions);
  for (int d = 0; d < kDigits; ++d) s.a.col(d) = glyphs.tiled_digit(d);
  for (int p = 0; p < kPositions; ++p) s.b.col(p) = glyphs.frame(p);

  // pick ten glyph pixels of tile 0 whose rows of the glyph matrix are independent
  const DenseMatrix g = glyph_matrix(glyphs);
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(DenseMatrix(g.transpose()));
  if (qr.rank() < kDigits) throw NumericalError("build_affine_system: glyphs admit no distinguishing pixel set");
  DenseMatrix sa(kDigits, kDigits);
  for (Index k = 0; k < kDigits; ++k) {
    const Index gp = qr.colsPermutation().indices()(k);
    const Index img = pixel(1 + gp / kGlyph, 1 + gp % kGlyph);
    s.probe_pixels.push_back(img);
    sa.row(k) = s.a.row(img);
  }
  const DenseMatrix g_inv = sa.fullPivLu().inverse();
  s.d = DenseMatrix::Zero(kDigits, kPixels);
  for (Index k = 0; k < kDigits; ++k) s.d.col(s.probe_pixels[static_cast<std::size_t>(k)]) = g_inv.col(k);
  return s;
}

DenseVector one_hot(int index, Index size) {
  DenseVector v = DenseVector::Zero(size);
  v(index) = 1.0;
  return v;
}

std::vector<TileSample> gen_dataset(Index n, Rng& rng, const GlyphSet& glyphs) {
  if (n < 1) throw ContractError("gen_dataset: n must be at least 1");
  std::vector<TileSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    TileSample s;
    s.digit = static_cast<int>(rng.below(kDigits));
    s.border = static_cast<int>(rng.below(kPositions));
    s.y = one_hot(s.digit, kDigits);
    s.u = one_hot(s.border, kPositions);
    s.x = render(s.digit, s.border, glyphs);
    out.push_back(std::move(s));
  }
  return out;
}

DenseMatrix stack_x(const std::vector<TileSample>& samples) {
  DenseMatrix m(static_cast<Index>(samples.size()), kPixels);
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Index>(i)) = samples[i].x.transpose();
  return m;
}

DenseMatrix stack_y(const std::vector<TileSample>& samples) {
  DenseMatrix m(static_cast<Index>(samples.size()), kDigits);
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Index>(i)) = samples[i].y.transpose();
  return m;
}

std::optional<int> classify_border(const DenseVector& x, const GlyphSet& glyphs, double floor) {
  if (x.size() != kPixels) throw ShapeError("classify_border: expected " + std::to_string(kPixels) + " pixels");
  const DenseVector cx = x.array() - x.mean();
  const double nx = cx.norm();
  if (nx == 0.0) return std::nullopt;
  int best = -1;
  double best_corr = floor;
  for (int p = 0; p < kPositions; ++p) {
    const DenseVector f = glyphs.frame(p);
    const DenseVector cf = f.array() - f.mean();
    const double corr = cx.dot(cf) / (nx * cf.norm());
    if (corr >= best_corr) {
      best_corr = corr;
      best = p;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

void write_pgm(std::ostream& out, const DenseVector& x, int scale) {
  if (x.size() != kPixels) throw ShapeError("write_pgm: expected " + std::to_string(kPixels) + " pixels");
  if (scale < 1) throw ContractError("write_pgm: scale must be positive");
  const Index side = kSide * scale;
  out << "P5\n" << side << ' ' << side << "\n255\n";
  for (Index r = 0; r < side; ++r) {
    for (Index c = 0; c < side; ++c) {
      const double v = std::clamp(x(pixel(r / scale, c / scale)), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
}

}  // namespace surjcycle::tiles
