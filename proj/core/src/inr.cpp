#include "inrattr/inr.hpp"

#include <cmath>
#include <cstring>

#include "inrattr/weights_io.hpp"

namespace inrattr {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
}

CoordinateGrid::CoordinateGrid(std::size_t height, std::size_t width)
    : height_(height), width_(width), coords_(2 * height * width) {
  if (height == 0 || width == 0) throw ShapeError("CoordinateGrid: empty grid");
  const float dx = width > 1 ? 1.0f / static_cast<float>(width - 1) : 0.0f;
  const float dy = height > 1 ? 1.0f / static_cast<float>(height - 1) : 0.0f;
  std::size_t at = 0;
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      coords_[at++] = static_cast<float>(col) * dx;
      coords_[at++] = static_cast<float>(row) * dy;
    }
  }
}

double AreaRange::scale(double raw) const {
  if (!(max > min)) throw Error("AreaRange: max must exceed min");
  return (raw - min) / (max - min);
}

double AreaRange::unscale(double s) const {
  if (!(max > min)) throw Error("AreaRange: max must exceed min");
  return min + s * (max - min);
}

AreaParameter make_area(const AreaRange& range, double raw) {
  if (!range.contains(raw)) {
    throw Error("area parameter " + std::to_string(raw) + " outside [" +
                std::to_string(range.min) + ", " + std::to_string(range.max) + "]");
  }
  return AreaParameter{raw, range.scale(raw)};
}

FourierEncoder::FourierEncoder(const InrArchitecture& arch, SeededRng& rng) {
  if (arch.fourier_kind == FourierKind::gaussian) {
    rows_ = arch.fourier_components;
    b_.resize(rows_ * kInputDim);
    for (auto& v : b_) {
      v = static_cast<float>(rng.normal() * arch.fourier_frequency);
    }
  } else {
    const auto freq = static_cast<std::size_t>(arch.fourier_frequency);
    rows_ = freq * kInputDim;
    b_.assign(rows_ * kInputDim, 0.0f);
    std::size_t row = 0;
    for (std::size_t axis = 0; axis < kInputDim; ++axis) {
      for (std::size_t k = 1; k <= freq; ++k) {
        b_[row * kInputDim + axis] = static_cast<float>(k);
        ++row;
      }
    }
  }
  if (rows_ == 0) throw Error("FourierEncoder: no frequency rows");
}

void FourierEncoder::set_frequency_matrix(std::vector<float> b) {
  if (b.size() % kInputDim != 0 || b.empty()) {
    throw ShapeError("FourierEncoder: frequency matrix must be [rows x 3]");
  }
  b_ = std::move(b);
  rows_ = b_.size() / kInputDim;
}

TensorPtr FourierEncoder::encode(const CoordinateGrid& grid, double scaled_area) const {
  if (!(scaled_area >= 0.0 && scaled_area <= 1.0)) {
    throw Error("encode: scaled area " + std::to_string(scaled_area) +
                " outside [0, 1]");
  }
  const std::size_t npix = grid.pixel_count();
  const std::size_t dim = output_dim();
  auto out = tensor({npix, dim}, 0.0f, false);
  const float* xy = grid.flat().data();
  const float s = static_cast<float>(scaled_area);
  for (std::size_t p = 0; p < npix; ++p) {
    const float px = xy[2 * p], py = xy[2 * p + 1];
    float* orow = out->data.data() + p * dim;
    for (std::size_t r = 0; r < rows_; ++r) {
      const float* brow = b_.data() + r * kInputDim;
      const float phase = static_cast<float>(
          kTwoPi * (static_cast<double>(brow[0]) * px +
                    static_cast<double>(brow[1]) * py +
                    static_cast<double>(brow[2]) * s));
      orow[r] = std::sin(phase);
      orow[rows_ + r] = std::cos(phase);
    }
  }
  return out;
}

TensorPtr FourierEncoder::encode(const CoordinateGrid& grid,
                                 std::span<const double> scaled_areas) const {
  const std::size_t npix = grid.pixel_count();
  if (scaled_areas.size() != npix) {
    throw ShapeError("encode: need one scaled area per pixel");
  }
  for (double s : scaled_areas) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw Error("encode: scaled area " + std::to_string(s) + " outside [0, 1]");
    }
  }
  const std::size_t dim = output_dim();
  auto out = tensor({npix, dim}, 0.0f, false);
  const float* xy = grid.flat().data();
  for (std::size_t p = 0; p < npix; ++p) {
    const float px = xy[2 * p], py = xy[2 * p + 1];
    const float s = static_cast<float>(scaled_areas[p]);
    float* orow = out->data.data() + p * dim;
    for (std::size_t r = 0; r < rows_; ++r) {
      const float* brow = b_.data() + r * kInputDim;
      const float phase = static_cast<float>(
          kTwoPi * (static_cast<double>(brow[0]) * px +
                    static_cast<double>(brow[1]) * py +
                    static_cast<double>(brow[2]) * s));
      orow[r] = std::sin(phase);
      orow[rows_ + r] = std::cos(phase);
    }
  }
  return out;
}

ImplicitMaskNetwork::ImplicitMaskNetwork(const InrArchitecture& arch,
                                         FourierEncoder encoder, std::uint64_t seed)
    : arch_(arch), encoder_(std::move(encoder)), seed_(seed) {}

ImplicitMaskNetwork ImplicitMaskNetwork::init(const InrArchitecture& arch,
                                              std::uint64_t seed) {
  SeededRng rng(seed);
  SeededRng enc_rng = rng.fork(0);
  SeededRng w_rng = rng.fork(1);

  ImplicitMaskNetwork net(arch, FourierEncoder(arch, enc_rng), seed);

  std::size_t fan_in = net.encoder_.output_dim();
  for (std::size_t l = 0; l < arch.hidden_layers; ++l) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    net.weights_.push_back(randn({fan_in, arch.hidden_width}, w_rng, stddev, true));
    net.biases_.push_back(tensor({std::size_t{1}, arch.hidden_width}, 0.0f, true));
    fan_in = arch.hidden_width;
  }
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  net.weights_.push_back(randn({fan_in, std::size_t{1}}, w_rng, stddev, true));
  net.biases_.push_back(tensor({std::size_t{1}, std::size_t{1}}, 0.0f, true));
  return net;
}

TensorPtr ImplicitMaskNetwork::forward_mask(Tape& tape, const CoordinateGrid& grid,
                                            double scaled_area) const {
  auto features = encoder_.encode(grid, scaled_area);
  return forward_features(tape, features, grid.height(), grid.width());
}

TensorPtr ImplicitMaskNetwork::forward_features(Tape& tape, const TensorPtr& features,
                                                std::size_t h, std::size_t w) const {
  TensorPtr x = features;
  const std::size_t hidden = arch_.hidden_layers;
  for (std::size_t l = 0; l < hidden; ++l) {
    x = op::relu(tape, op::add_rowvec(tape, op::matmul(tape, x, weights_[l]), biases_[l]));
  }
  x = op::sigmoid(tape, op::add_rowvec(tape, op::matmul(tape, x, weights_[hidden]),
                                       biases_[hidden]));
  return op::reshape(tape, x, {h, w});
}

std::vector<TensorPtr> ImplicitMaskNetwork::parameters() const {
  std::vector<TensorPtr> params;
  params.reserve(weights_.size() + biases_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    params.push_back(weights_[l]);
    params.push_back(biases_[l]);
  }
  return params;
}

void ImplicitMaskNetwork::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> out;
  const float kind = arch_.fourier_kind == FourierKind::gaussian ? 0.0f : 1.0f;
  auto meta = tensor({std::size_t{8}}, 0.0f, false);
  meta->data[0] = static_cast<float>(arch_.hidden_layers);
  meta->data[1] = static_cast<float>(arch_.hidden_width);
  meta->data[2] = static_cast<float>(arch_.fourier_components);
  meta->data[3] = static_cast<float>(arch_.fourier_frequency);
  meta->data[4] = kind;
  meta->data[5] = static_cast<float>(static_cast<std::uint32_t>(seed_ >> 32));
  meta->data[6] = static_cast<float>(static_cast<std::uint32_t>(seed_ & 0xffffffffULL));
  meta->data[7] = 0.0f;
  out.push_back({"meta", meta});
  auto b = tensor({encoder_.rows(), FourierEncoder::kInputDim},
                  encoder_.frequency_matrix(), false);
  out.push_back({"encoder.B", b});
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const std::string stem =
        (l + 1 == weights_.size()) ? "out" : "hidden" + std::to_string(l);
    out.push_back({stem + ".w", weights_[l]});
    out.push_back({stem + ".b", biases_[l]});
  }
  save_tensors(path, out);
}

ImplicitMaskNetwork ImplicitMaskNetwork::load(const std::filesystem::path& path) {
  auto all = load_tensors(path);
  auto find = [&](const std::string& name) -> TensorPtr {
    for (auto& nt : all) {
      if (nt.name == name) return nt.value;
    }
    throw IoError("network load: missing tensor '" + name + "' in " + path.string());
  };
  const auto meta = find("meta");
  if (meta->size() < 8) throw IoError("network load: bad meta in " + path.string());
  InrArchitecture arch;
  arch.hidden_layers = static_cast<std::size_t>(meta->data[0]);
  arch.hidden_width = static_cast<std::size_t>(meta->data[1]);
  arch.fourier_components = static_cast<std::size_t>(meta->data[2]);
  arch.fourier_frequency = meta->data[3];
  arch.fourier_kind = meta->data[4] == 0.0f ? FourierKind::gaussian : FourierKind::axis_aligned;
  const std::uint64_t seed =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(meta->data[5])) << 32) |
      static_cast<std::uint64_t>(static_cast<std::uint32_t>(meta->data[6]));

  ImplicitMaskNetwork net = init(arch, seed);
  net.encoder_.set_frequency_matrix(find("encoder.B")->data);
  for (std::size_t l = 0; l <= arch.hidden_layers; ++l) {
    const std::string stem = (l == arch.hidden_layers) ? "out" : "hidden" + std::to_string(l);
    auto w = find(stem + ".w");
    auto b = find(stem + ".b");
    if (w->shape != net.weights_[l]->shape || b->shape != net.biases_[l]->shape) {
      throw IoError("network load: layer shape mismatch in " + path.string());
    }
    net.weights_[l]->data = w->data;
    net.biases_[l]->data = b->data;
  }
  return net;
}

}  // namespace inrattr
