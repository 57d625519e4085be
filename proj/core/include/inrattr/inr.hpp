#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "inrattr/rng.hpp"
#include "inrattr/tensor.hpp"

namespace inrattr {

/// Normalized pixel-center coordinates. Corner pixels land exactly on 0 and 1
/// per axis; storage is row-major (x, y) pairs matching image layout.
class CoordinateGrid {
 public:
  CoordinateGrid(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixel_count() const { return height_ * width_; }
  /// Pair (x, y) for the pixel at (row, col).
  float x(std::size_t row, std::size_t col) const { return coords_[2 * (row * width_ + col)]; }
  float y(std::size_t row, std::size_t col) const { return coords_[2 * (row * width_ + col) + 1]; }
  const std::vector<float>& flat() const { return coords_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<float> coords_;  // 2 * h * w
};

/// Mask area constraint interval. Raw areas live in [min, max]; the network
/// is conditioned on the affinely scaled value in [0, 1].
struct AreaRange {
  double min = 0.025;
  double max = 0.2;

  double scale(double raw) const;    // raw in [min, max] -> [0, 1]
  double unscale(double s) const;    // inverse
  bool contains(double raw) const { return raw >= min && raw <= max; }
};

/// An area constraint with both representations attached.
struct AreaParameter {
  double raw = 0.0;
  double scaled = 0.0;
};

AreaParameter make_area(const AreaRange& range, double raw);

enum class FourierKind {
  gaussian,      // rows of B drawn N(0, frequency^2)
  axis_aligned,  // rows k * e_i, k = 1..frequency per input axis
};

struct InrArchitecture {
  std::size_t hidden_layers = 5;
  std::size_t hidden_width = 256;
  std::size_t fourier_components = 128;
  double fourier_frequency = 6.0;
  FourierKind fourier_kind = FourierKind::gaussian;
};

/// Sinusoidal input mapping over (x, y, scaled area). Output is the sin block
/// concatenated with the cos block, 2 * rows(B) features per pixel. B is
/// fixed at construction; the same seed reproduces it bit for bit.
class FourierEncoder {
 public:
  FourierEncoder(const InrArchitecture& arch, SeededRng& rng);

  static constexpr std::size_t kInputDim = 3;

  std::size_t rows() const { return rows_; }
  std::size_t output_dim() const { return 2 * rows_; }
  const std::vector<float>& frequency_matrix() const { return b_; }
  void set_frequency_matrix(std::vector<float> b);

  /// Features for every grid pixel at one shared scaled area, [npix x 2R].
  /// Constant with respect to the tape (B carries no gradient).
  TensorPtr encode(const CoordinateGrid& grid, double scaled_area) const;

  /// Per-pixel scaled areas (alternative sampling mode).
  TensorPtr encode(const CoordinateGrid& grid, std::span<const double> scaled_areas) const;

 private:
  std::size_t rows_ = 0;
  std::vector<float> b_;  // rows_ x 3, row-major
};

/// The conditioned coordinate network: Fourier encoding, ReLU hidden stack,
/// sigmoid output in (0,1).
class ImplicitMaskNetwork {
 public:
  static ImplicitMaskNetwork init(const InrArchitecture& arch, std::uint64_t seed);

  /// Raw (unfiltered) mask, shape [h x w], differentiable in all weights.
  TensorPtr forward_mask(Tape& tape, const CoordinateGrid& grid, double scaled_area) const;

  /// As above with a precomputed feature batch (training fast path).
  TensorPtr forward_features(Tape& tape, const TensorPtr& features,
                             std::size_t h, std::size_t w) const;

  std::vector<TensorPtr> parameters() const;

  const InrArchitecture& architecture() const { return arch_; }
  const FourierEncoder& encoder() const { return encoder_; }
  std::uint64_t seed() const { return seed_; }

  void save(const std::filesystem::path& path) const;
  static ImplicitMaskNetwork load(const std::filesystem::path& path);

 private:
  ImplicitMaskNetwork(const InrArchitecture& arch, FourierEncoder encoder,
                      std::uint64_t seed);

  InrArchitecture arch_;
  FourierEncoder encoder_;
  std::uint64_t seed_ = 0;
  std::vector<TensorPtr> weights_;  // hidden stack then output layer
  std::vector<TensorPtr> biases_;
};

}  // namespace inrattr
