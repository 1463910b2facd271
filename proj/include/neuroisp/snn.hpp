#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "neuroisp/common.hpp"
#include "neuroisp/events.hpp"

namespace neuroisp::snn {

struct LifParams {
  double tau_m = 2.0;   // membrane time constant, in timesteps
  double u_rest = 0.0;  // resting potential
  double R = 1.0;       // input resistance
  double theta = 1.0;   // firing threshold
  double dt = 1.0;      // integration step, fixed at one timestep

  void validate() const {
    if (tau_m < dt) fail(Errc::out_of_range, "tau_m must be >= dt");
    if (theta <= u_rest) fail(Errc::out_of_range, "theta must exceed u_rest");
    if (R <= 0.0) fail(Errc::out_of_range, "R must be positive");
  }
};

struct SurrogateParams {
  double k = 10.0;  // sharpness of the surrogate derivative
};

struct AdamWParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Fast-sigmoid surrogate, 1 / (1 + k|u - theta|)^2. Backward-pass stand-in
// for the threshold derivative; the forward pass keeps the hard threshold.
double surrogate_derivative(double u, double theta, double k);

// Antiderivative of surrogate_derivative: (u - theta) / (1 + k|u - theta|).
// Used as the spike value in relaxed mode, where the BPTT gradient is the
// exact derivative of the forward pass (the basis of the gradient check).
double relaxed_spike(double u, double theta, double k);

// Forward-Euler step of the LIF dynamics for one layer. Update order is
// integrate, threshold, reset: u' = u + (dt/tau)(u_rest - u + R*I); spike
// where u' >= theta; spiking neurons are hard-reset to u_rest.
template <typename T>
struct LifStepResult {
  std::vector<T> u_next;
  std::vector<std::uint8_t> spikes;
};

template <typename T>
LifStepResult<T> lif_step(const std::vector<T>& u, const std::vector<T>& input_current,
                          const LifParams& params);

enum class LayerKind { conv2d, dense };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int out_channels = 0;  // conv2d
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int units = 0;  // dense
  LifParams lif;
};

struct NetSpec {
  int bins = 5;
  int height = 24;
  int width = 24;
  std::vector<LayerSpec> layers;
  SurrogateParams surrogate;
};

struct TensorShape {
  std::vector<int> dims;
  std::size_t count() const {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

// Spike emission mode. Hard is the production path (binary spikes);
// Relaxed substitutes the smooth antiderivative of the surrogate so the
// BPTT gradient can be checked against finite differences.
enum class SpikeMode { hard, relaxed };

struct ForwardResult {
  std::vector<double> logits;  // per-class accumulated output over all timesteps
  // hard spikes, one vector of size neuron_count per layer per timestep:
  // spike_record[layer][bin][neuron]
  std::vector<std::vector<std::vector<std::uint8_t>>> spike_record;
};

template <typename T>
class SpikingNet {
 public:
  explicit SpikingNet(const NetSpec& spec);

  const NetSpec& spec() const { return spec_; }
  int class_count() const;
  int layer_count() const { return static_cast<int>(layers_.size()); }
  int neuron_count(int layer) const;

  void init_weights(Rng& rng);

  ForwardResult forward(const events::VoxelGrid& input, SpikeMode mode = SpikeMode::hard) const;

  // Parameter access, ordered weight0, bias0, weight1, bias1, ...
  int tensor_count() const { return layer_count() * 2; }
  std::vector<T>& tensor(int index);
  const std::vector<T>& tensor(int index) const;
  TensorShape tensor_shape(int index) const;
  std::string tensor_name(int index) const;

  struct Gradients {
    std::vector<std::vector<T>> by_tensor;
  };

  // Accumulates BPTT gradients of the softmax cross-entropy on the summed
  // output for one sample into `grads`; returns the sample loss. The reset
  // path is gradient-stopped and the threshold derivative is replaced by
  // the surrogate (which is exact in relaxed mode).
  double backward(const events::VoxelGrid& input, int label, SpikeMode mode,
                  Gradients& grads) const;

  Gradients zero_gradients() const;

 private:
  struct Layer {
    LayerSpec spec;
    int in_c = 0, in_h = 0, in_w = 0;    // conv input dims
    int out_c = 0, out_h = 0, out_w = 0; // conv output dims
    int in_features = 0;                 // dense
    int out_features = 0;                // neurons in this layer
    std::vector<T> weight;
    std::vector<T> bias;
  };

  struct Tape;  // per-sample forward record for BPTT

  void apply_layer(const Layer& layer, const std::vector<T>& x, std::vector<T>& current) const;
  void backward_layer(const Layer& layer, const std::vector<T>& x, const std::vector<T>& d_current,
                      std::vector<T>& dx, std::vector<T>& d_weight, std::vector<T>& d_bias) const;
  double run(const events::VoxelGrid& input, SpikeMode mode, ForwardResult* result, Tape* tape,
             int label) const;

  NetSpec spec_;
  std::vector<Layer> layers_;
};

// One decoupled-weight-decay Adam update over a flat parameter tensor.
template <typename T>
struct AdamWState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;
};

template <typename T>
void adamw_update(std::vector<T>& param, const std::vector<T>& grad, AdamWState<T>& state,
                  const AdamWParams& hyper);

template <typename T>
class Trainer {
 public:
  Trainer(SpikingNet<T>& net, const AdamWParams& hyper);

  // One BPTT step over the batch (mean loss); applies one AdamW update.
  double train_step(const std::vector<std::pair<const events::VoxelGrid*, int>>& batch);

  const AdamWParams& hyper() const { return hyper_; }

 private:
  SpikingNet<T>& net_;
  AdamWParams hyper_;
  std::vector<AdamWState<T>> opt_state_;
};

// Fraction of (hidden neuron, sample) pairs that never spike across all
// timesteps. The output layer is excluded.
template <typename T>
double sparsity(const SpikingNet<T>& net, const std::vector<events::VoxelGrid>& dataset);

// Checkpoint I/O (single little-endian container file, versioned header,
// named shape-tagged tensors plus the net spec).
template <typename T>
void save_checkpoint(const std::string& path, const SpikingNet<T>& net);

// Returns the checkpoint's net with weights restored; `float32_out`, when
// non-null, reports the stored precision.
std::unique_ptr<SpikingNet<double>> load_checkpoint_f64(const std::string& path);
std::unique_ptr<SpikingNet<float>> load_checkpoint_f32(const std::string& path);
bool checkpoint_is_float32(const std::string& path);

NetSpec net_spec_from_json_string(const std::string& text);
std::string net_spec_to_json_string(const NetSpec& spec);

}  // namespace neuroisp::snn
