#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "surjcycle/numerics/dense.hpp"
#include "surjcycle/numerics/rng.hpp"

namespace surjcycle::tiles {

inline constexpr Index kDigits = 10;
inline constexpr Index kPositions = 9;
inline constexpr Index kGlyph = 5;
inline constexpr Index kTile = 7;
inline constexpr Index kSide = 3 * kTile;
inline constexpr Index kPixels = kSide * kSide;

/// Digit bitmaps (kGlyph x kGlyph, row-major) centred in a kTile tile, and the
/// one-pixel frame of each of the nine tiles over the full image.
struct GlyphSet {
  std::array<std::array<bool, kGlyph * kGlyph>, kDigits> digits{};

  /// Pixel count of one digit bitmap.
  Index glyph_pixels(int digit) const;
  /// Full-image mask of the frame around tile `pos` (row-major tile order).
  DenseVector frame(int pos) const;
  /// Full-image image of `digit` repeated in all nine tiles.
  DenseVector tiled_digit(int digit) const;
};

/// The bundled 5x5 font. Throws NumericalError if its glyph matrix is not rank 10.
const GlyphSet& default_glyphs();

/// Digit in every tile plus the frame at border_pos; values in {0, 1}.
DenseVector render(int digit, int border_pos, const GlyphSet& glyphs = default_glyphs());

/// x = A y + B u with one-hot y, u; D A = I and D B = 0.
struct TileSystem {
  DenseMatrix a;  // kPixels x 10
  DenseMatrix b;  // kPixels x 9
  DenseMatrix d;  // 10 x kPixels
  /// Image indices of the pixels D reads.
  std::vector<Index> probe_pixels;
};

/// D = G^{-1} S where S selects ten glyph pixels of the first tile (column
/// pivoting on the glyph matrix) and G = S A. Throws NumericalError when no
/// such set exists.
TileSystem build_affine_system(const GlyphSet& glyphs = default_glyphs());

struct TileSample {
  int digit = 0;
  int border = 0;
  DenseVector y;  // 10, one-hot
  DenseVector u;  // 9, one-hot
  DenseVector x;  // kPixels
};

/// Digit uniform on 0..9 and border uniform on 0..8, independent.
std::vector<TileSample> gen_dataset(Index n, Rng& rng, const GlyphSet& glyphs = default_glyphs());

/// Rows of x (n x kPixels) and y (n x 10).
DenseMatrix stack_x(const std::vector<TileSample>& samples);
DenseMatrix stack_y(const std::vector<TileSample>& samples);

DenseVector one_hot(int index, Index size);

/// Frame position with the largest Pearson correlation between the image and
/// the frame mask; nullopt when every correlation is below `floor`.
std::optional<int> classify_border(const DenseVector& x, const GlyphSet& glyphs = default_glyphs(),
                                   double floor = 0.1);

/// Binary PGM (P5, maxval 255) of a kSide x kSide image, each pixel drawn as a
/// scale x scale block. Values are clamped to [0, 1].
void write_pgm(std::ostream& out, const DenseVector& x, int scale = 1);

}  // namespace surjcycle::tiles
