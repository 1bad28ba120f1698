#ifndef DISKILL_NN_HPP
#define DISKILL_NN_HPP

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace diskill {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

/**
 * Fully connected network with tanh hidden activations and a linear output.
 *
 * Parameters are addressable as one flat vector (layer by layer, weight in
 * column-major order followed by bias) so optimizers and checkpoints can
 * treat every network uniformly.
 *
 * Evaluation is const and thread-safe; mutation requires exclusive access.
 */
class DenseNet {
 public:
  DenseNet() = default;

  /// Zero-initialized network. `layer_dims` = {in, hidden..., out}.
  explicit DenseNet(std::vector<int> layer_dims);

  /// Orthogonal initialization: gain sqrt(2) on hidden layers, `output_gain`
  /// on the last layer, zero biases.
  static DenseNet orthogonal(std::vector<int> layer_dims, std::mt19937_64& rng,
                             double hidden_gain = 1.4142135623730951, double output_gain = 0.01);

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }

  Vec forward(const Vec& x) const;
  /// Batched forward; each column of `xs` is one input.
  Mat forward_batch(const Mat& xs) const;

  /// Gradient of <upstream, forward(x)> w.r.t. the flat parameter vector.
  Vec backprop(const Vec& x, const Vec& upstream) const;
  /// Sum over columns of the per-sample gradients of <upstream_j, forward(x_j)>.
  Vec backprop_batch(const Mat& xs, const Mat& upstream) const;
  /// Gradient of <upstream, forward(x)> w.r.t. the input x.
  Vec input_gradient(const Vec& x, const Vec& upstream) const;

  std::size_t num_params() const;
  Vec flat_params() const;
  void set_flat_params(const Eigen::Ref<const Vec>& flat);

 private:
  struct Activations {
    std::vector<Mat> post;  // post[0] = input, post[i+1] = output of layer i
  };
  Activations run(const Mat& xs) const;
  Vec backward(const Activations& acts, const Mat& upstream, Vec* input_grad) const;

  std::vector<int> dims_;
  std::vector<DenseLayer> layers_;
};

/// Adam moments for one flat parameter vector.
struct AdamState {
  Vec m;
  Vec v;
  std::int64_t step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate)
      : m(Vec::Zero(static_cast<Eigen::Index>(n))), v(Vec::Zero(static_cast<Eigen::Index>(n))),
        lr(learning_rate) {}
};

/// One bias-corrected Adam step that *descends* `grads`. Updates params in place.
void adam_step(Vec& params, const Vec& grads, AdamState& state);

/// Random matrix with orthonormal rows or columns (whichever is smaller), scaled by gain.
Mat orthogonal_matrix(int rows, int cols, std::mt19937_64& rng, double gain);

}  // namespace diskill

#endif  // DISKILL_NN_HPP
