#include "diskill/nn.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "diskill/errors.hpp"

namespace diskill {

DenseNet::DenseNet(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  require_shape(dims_.size() >= 2, "DenseNet needs at least input and output dims");
  for (int d : dims_) require_shape(d > 0, "DenseNet layer dims must be positive");
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    layers_.push_back({Mat::Zero(dims_[i + 1], dims_[i]), Vec::Zero(dims_[i + 1])});
  }
}

Mat orthogonal_matrix(int rows, int cols, std::mt19937_64& rng, double gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool tall = rows >= cols;
  const int big = tall ? rows : cols;
  const int small = tall ? cols : rows;
  Mat a(big, small);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  // Sign fix makes the draw uniform over the orthogonal group.
  const Mat r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  Mat w = tall ? q : Mat(q.transpose());
  return gain * w;
}

DenseNet DenseNet::orthogonal(std::vector<int> layer_dims, std::mt19937_64& rng, double hidden_gain,
                              double output_gain) {
  DenseNet net(std::move(layer_dims));
  for (std::size_t i = 0; i < net.layers_.size(); ++i) {
    const bool last = i + 1 == net.layers_.size();
    auto& l = net.layers_[i];
    l.weight = orthogonal_matrix(static_cast<int>(l.weight.rows()), static_cast<int>(l.weight.cols()),
                                 rng, last ? output_gain : hidden_gain);
    l.bias.setZero();
  }
  return net;
}

DenseNet::Activations DenseNet::run(const Mat& xs) const {
  require_shape(xs.rows() == input_dim(), "DenseNet input has dimension " +
                                              std::to_string(xs.rows()) + ", expected " +
                                              std::to_string(input_dim()));
  Activations acts;
  acts.post.reserve(layers_.size() + 1);
  acts.post.push_back(xs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Mat z = layers_[i].weight * acts.post.back();
    z.colwise() += layers_[i].bias;
    if (i + 1 < layers_.size()) z = z.array().tanh().matrix();
    acts.post.push_back(std::move(z));
  }
  return acts;
}

Vec DenseNet::forward(const Vec& x) const { return run(x).post.back().col(0); }

Mat DenseNet::forward_batch(const Mat& xs) const { return run(xs).post.back(); }

Vec DenseNet::backward(const Activations& acts, const Mat& upstream, Vec* input_grad) const {
  require_shape(upstream.rows() == output_dim() && upstream.cols() == acts.post.front().cols(),
                "DenseNet upstream gradient shape mismatch");
  Vec grads(static_cast<Eigen::Index>(num_params()));
  // Offsets of each layer in the flat vector.
  std::vector<Eigen::Index> offsets(layers_.size());
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = off;
    off += layers_[i].weight.size() + layers_[i].bias.size();
  }
  Mat delta = upstream;  // d loss / d pre-activation of the current layer
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Mat& in = acts.post[k];
    Eigen::Map<Mat> gw(grads.data() + offsets[k], l.weight.rows(), l.weight.cols());
    gw.noalias() = delta * in.transpose();
    grads.segment(offsets[k] + l.weight.size(), l.bias.size()) = delta.rowwise().sum();
    if (k > 0 || input_grad != nullptr) {
      Mat back = l.weight.transpose() * delta;
      if (k > 0) {
        // tanh' = 1 - tanh^2 on the hidden activation feeding this layer
        delta = back.array() * (1.0 - in.array().square());
      } else {
        *input_grad = back.rowwise().sum();
      }
    }
  }
  return grads;
}

Vec DenseNet::backprop(const Vec& x, const Vec& upstream) const {
  return backward(run(x), upstream, nullptr);
}

Vec DenseNet::backprop_batch(const Mat& xs, const Mat& upstream) const {
  return backward(run(xs), upstream, nullptr);
}

Vec DenseNet::input_gradient(const Vec& x, const Vec& upstream) const {
  Vec g;
  backward(run(x), upstream, &g);
  return g;
}

std::size_t DenseNet::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vec DenseNet::flat_params() const {
  Vec out(static_cast<Eigen::Index>(num_params()));
  Eigen::Index off = 0;
  for (const auto& l : layers_) {
    out.segment(off, l.weight.size()) = l.weight.reshaped();
    off += l.weight.size();
    out.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return out;
}

void DenseNet::set_flat_params(const Eigen::Ref<const Vec>& flat) {
  require_shape(flat.size() == static_cast<Eigen::Index>(num_params()),
                "flat parameter vector has wrong length");
  Eigen::Index off = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = flat.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = flat.segment(off, l.bias.size());
    off += l.bias.size();
  }
}

void adam_step(Vec& params, const Vec& grads, AdamState& state) {
  require_shape(params.size() == grads.size() && state.m.size() == params.size() &&
                    state.v.size() == params.size(),
                "adam_step: parameter, gradient and moment shapes differ");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace diskill
