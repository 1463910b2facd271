#include "neuroisp/snn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "neuroisp/imgio.hpp"

namespace neuroisp::snn {

using nlohmann::json;

double surrogate_derivative(double u, double theta, double k) {
  const double denom = 1.0 + k * std::fabs(u - theta);
  return 1.0 / (denom * denom);
}

double relaxed_spike(double u, double theta, double k) {
  const double d = u - theta;
  return d / (1.0 + k * std::fabs(d));
}

template <typename T>
LifStepResult<T> lif_step(const std::vector<T>& u, const std::vector<T>& input_current,
                          const LifParams& params) {
  if (u.size() != input_current.size()) fail(Errc::shape_mismatch, "state/current size mismatch");
  params.validate();
  LifStepResult<T> out;
  out.u_next.resize(u.size());
  out.spikes.resize(u.size());
  const T leak = static_cast<T>(params.dt / params.tau_m);
  const T u_rest = static_cast<T>(params.u_rest);
  const T theta = static_cast<T>(params.theta);
  const T r = static_cast<T>(params.R);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(static_cast<double>(u[i])) ||
        !std::isfinite(static_cast<double>(input_current[i])))
      fail(Errc::non_finite_input, "non-finite membrane state or input current");
    const T integrated = u[i] + leak * (u_rest - u[i] + r * input_current[i]);
    const bool spike = integrated >= theta;
    out.spikes[i] = spike ? 1 : 0;
    out.u_next[i] = spike ? u_rest : integrated;
  }
  return out;
}

template LifStepResult<double> lif_step(const std::vector<double>&, const std::vector<double>&,
                                        const LifParams&);
template LifStepResult<float> lif_step(const std::vector<float>&, const std::vector<float>&,
                                       const LifParams&);

template <typename T>
struct SpikingNet<T>::Tape {
  // indexed [bin][layer]
  std::vector<std::vector<std::vector<T>>> input;        // layer input activations
  std::vector<std::vector<std::vector<T>>> u_integrated; // membrane after integrate
  std::vector<std::vector<std::vector<std::uint8_t>>> hard;
};

template <typename T>
SpikingNet<T>::SpikingNet(const NetSpec& spec) : spec_(spec) {
  if (spec.layers.empty()) fail(Errc::shape_mismatch, "net needs at least one layer");
  int c = 2, h = spec.height, w = spec.width;
  bool flattened = false;
  for (const LayerSpec& ls : spec.layers) {
    ls.lif.validate();
    Layer layer;
    layer.spec = ls;
    if (ls.kind == LayerKind::conv2d) {
      if (flattened) fail(Errc::shape_mismatch, "conv2d cannot follow a dense layer");
      if (ls.kernel < 1 || ls.stride < 1 || ls.pad < 0 || ls.out_channels < 1)
        fail(Errc::shape_mismatch, "bad conv2d geometry");
      layer.in_c = c;
      layer.in_h = h;
      layer.in_w = w;
      layer.out_c = ls.out_channels;
      layer.out_h = (h + 2 * ls.pad - ls.kernel) / ls.stride + 1;
      layer.out_w = (w + 2 * ls.pad - ls.kernel) / ls.stride + 1;
      if (layer.out_h < 1 || layer.out_w < 1)
        fail(Errc::shape_mismatch, "conv2d output collapses to zero");
      layer.in_features = c * h * w;
      layer.out_features = layer.out_c * layer.out_h * layer.out_w;
      layer.weight.assign(static_cast<std::size_t>(layer.out_c) * c * ls.kernel * ls.kernel,
                          T{0});
      layer.bias.assign(layer.out_c, T{0});
      c = layer.out_c;
      h = layer.out_h;
      w = layer.out_w;
    } else {
      if (ls.units < 1) fail(Errc::shape_mismatch, "dense layer needs units >= 1");
      layer.in_features = c * h * w;
      layer.out_features = ls.units;
      layer.weight.assign(static_cast<std::size_t>(ls.units) * layer.in_features, T{0});
      layer.bias.assign(ls.units, T{0});
      flattened = true;
      c = ls.units;
      h = 1;
      w = 1;
    }
    layers_.push_back(std::move(layer));
  }
  if (layers_.back().spec.kind != LayerKind::dense)
    fail(Errc::shape_mismatch, "final layer must be dense (class readout)");
}

template <typename T>
int SpikingNet<T>::class_count() const {
  return layers_.back().out_features;
}

template <typename T>
int SpikingNet<T>::neuron_count(int layer) const {
  return layers_[layer].out_features;
}

template <typename T>
void SpikingNet<T>::init_weights(Rng& rng) {
  for (Layer& layer : layers_) {
    const int fan_in = layer.spec.kind == LayerKind::conv2d
                           ? layer.in_c * layer.spec.kernel * layer.spec.kernel
                           : layer.in_features;
    const double bound = 2.0 * std::sqrt(6.0 / fan_in);
    for (T& v : layer.weight) v = static_cast<T>(rng.uniform_range(-bound, bound));
    std::fill(layer.bias.begin(), layer.bias.end(), T{0});
  }
}

template <typename T>
std::vector<T>& SpikingNet<T>::tensor(int index) {
  Layer& layer = layers_[index / 2];
  return (index % 2 == 0) ? layer.weight : layer.bias;
}

template <typename T>
const std::vector<T>& SpikingNet<T>::tensor(int index) const {
  const Layer& layer = layers_[index / 2];
  return (index % 2 == 0) ? layer.weight : layer.bias;
}

template <typename T>
TensorShape SpikingNet<T>::tensor_shape(int index) const {
  const Layer& layer = layers_[index / 2];
  if (index % 2 == 1) return TensorShape{{static_cast<int>(layer.bias.size())}};
  if (layer.spec.kind == LayerKind::conv2d)
    return TensorShape{{layer.out_c, layer.in_c, layer.spec.kernel, layer.spec.kernel}};
  return TensorShape{{layer.out_features, layer.in_features}};
}

template <typename T>
std::string SpikingNet<T>::tensor_name(int index) const {
  return "layers." + std::to_string(index / 2) + (index % 2 == 0 ? ".weight" : ".bias");
}

template <typename T>
void SpikingNet<T>::apply_layer(const Layer& layer, const std::vector<T>& x,
                                std::vector<T>& current) const {
  current.assign(layer.out_features, T{0});
  if (layer.spec.kind == LayerKind::dense) {
    for (int j = 0; j < layer.out_features; ++j) {
      T sum = layer.bias[j];
      const T* row = &layer.weight[static_cast<std::size_t>(j) * layer.in_features];
      for (int i = 0; i < layer.in_features; ++i) sum += row[i] * x[i];
      current[j] = sum;
    }
    return;
  }
  const int k = layer.spec.kernel, s = layer.spec.stride, p = layer.spec.pad;
  for (int oc = 0; oc < layer.out_c; ++oc) {
    for (int oy = 0; oy < layer.out_h; ++oy) {
      for (int ox = 0; ox < layer.out_w; ++ox) {
        T sum = layer.bias[oc];
        for (int ic = 0; ic < layer.in_c; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= layer.in_h) continue;
            const T* wrow =
                &layer.weight[((static_cast<std::size_t>(oc) * layer.in_c + ic) * k + ky) * k];
            const T* xrow = &x[(static_cast<std::size_t>(ic) * layer.in_h + iy) * layer.in_w];
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= layer.in_w) continue;
              sum += wrow[kx] * xrow[ix];
            }
          }
        }
        current[(static_cast<std::size_t>(oc) * layer.out_h + oy) * layer.out_w + ox] = sum;
      }
    }
  }
}

template <typename T>
void SpikingNet<T>::backward_layer(const Layer& layer, const std::vector<T>& x,
                                   const std::vector<T>& d_current, std::vector<T>& dx,
                                   std::vector<T>& d_weight, std::vector<T>& d_bias) const {
  dx.assign(layer.in_features, T{0});
  if (layer.spec.kind == LayerKind::dense) {
    for (int j = 0; j < layer.out_features; ++j) {
      const T g = d_current[j];
      if (g == T{0}) continue;
      d_bias[j] += g;
      const T* row = &layer.weight[static_cast<std::size_t>(j) * layer.in_features];
      T* wg = &d_weight[static_cast<std::size_t>(j) * layer.in_features];
      for (int i = 0; i < layer.in_features; ++i) {
        wg[i] += g * x[i];
        dx[i] += g * row[i];
      }
    }
    return;
  }
  const int k = layer.spec.kernel, s = layer.spec.stride, p = layer.spec.pad;
  for (int oc = 0; oc < layer.out_c; ++oc) {
    for (int oy = 0; oy < layer.out_h; ++oy) {
      for (int ox = 0; ox < layer.out_w; ++ox) {
        const T g =
            d_current[(static_cast<std::size_t>(oc) * layer.out_h + oy) * layer.out_w + ox];
        if (g == T{0}) continue;
        d_bias[oc] += g;
        for (int ic = 0; ic < layer.in_c; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= layer.in_h) continue;
            const std::size_t wbase =
                ((static_cast<std::size_t>(oc) * layer.in_c + ic) * k + ky) * k;
            const std::size_t xbase =
                (static_cast<std::size_t>(ic) * layer.in_h + iy) * layer.in_w;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - p + kx;
              if (ix < 0 || ix >= layer.in_w) continue;
              d_weight[wbase + kx] += g * x[xbase + ix];
              dx[xbase + ix] += g * layer.weight[wbase + kx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
double SpikingNet<T>::run(const events::VoxelGrid& input, SpikeMode mode, ForwardResult* result,
                          Tape* tape, int label) const {
  if (input.height() != spec_.height || input.width() != spec_.width ||
      input.bins() != spec_.bins)
    fail(Errc::shape_mismatch, "voxel grid dims do not match net input");
  const int bins = spec_.bins;
  const int layer_n = layer_count();
  const std::size_t bin_size = static_cast<std::size_t>(2) * spec_.height * spec_.width;

  std::vector<std::vector<T>> u(layer_n);
  for (int l = 0; l < layer_n; ++l)
    u[l].assign(layers_[l].out_features, static_cast<T>(layers_[l].spec.lif.u_rest));

  std::vector<double> logits(class_count(), 0.0);
  if (result != nullptr) {
    result->spike_record.assign(layer_n, {});
    for (int l = 0; l < layer_n; ++l) result->spike_record[l].resize(bins);
  }
  if (tape != nullptr) {
    tape->input.assign(bins, std::vector<std::vector<T>>(layer_n));
    tape->u_integrated.assign(bins, std::vector<std::vector<T>>(layer_n));
    tape->hard.assign(bins, std::vector<std::vector<std::uint8_t>>(layer_n));
  }

  std::vector<T> x(bin_size);
  std::vector<T> current;
  for (int b = 0; b < bins; ++b) {
    const std::uint8_t* bin = input.data().data() + static_cast<std::size_t>(b) * bin_size;
    x.resize(bin_size);
    for (std::size_t i = 0; i < bin_size; ++i) x[i] = static_cast<T>(bin[i]);
    for (int l = 0; l < layer_n; ++l) {
      const Layer& layer = layers_[l];
      const LifParams& lif = layer.spec.lif;
      if (tape != nullptr) tape->input[b][l] = x;
      apply_layer(layer, x, current);
      const T leak = static_cast<T>(lif.dt / lif.tau_m);
      const T u_rest = static_cast<T>(lif.u_rest);
      const T theta = static_cast<T>(lif.theta);
      const T r = static_cast<T>(lif.R);
      std::vector<T> emitted(layer.out_features);
      std::vector<std::uint8_t> hard(layer.out_features);
      if (tape != nullptr) tape->u_integrated[b][l].resize(layer.out_features);
      for (int i = 0; i < layer.out_features; ++i) {
        if (!std::isfinite(static_cast<double>(current[i])))
          fail(Errc::non_finite_input, "non-finite input current in layer " + std::to_string(l));
        const T integrated = u[l][i] + leak * (u_rest - u[l][i] + r * current[i]);
        const bool spike = integrated >= theta;
        hard[i] = spike ? 1 : 0;
        emitted[i] = mode == SpikeMode::hard
                         ? static_cast<T>(hard[i])
                         : static_cast<T>(relaxed_spike(static_cast<double>(integrated),
                                                        lif.theta, spec_.surrogate.k));
        if (tape != nullptr) tape->u_integrated[b][l][i] = integrated;
        u[l][i] = spike ? u_rest : integrated;
      }
      if (tape != nullptr) tape->hard[b][l] = hard;
      if (result != nullptr) result->spike_record[l][b] = hard;
      if (l == layer_n - 1)
        for (int cidx = 0; cidx < class_count(); ++cidx)
          logits[cidx] += static_cast<double>(emitted[cidx]);
      x = std::move(emitted);
    }
  }

  if (result != nullptr) result->logits = logits;
  if (label < 0) return 0.0;

  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double loss = -(logits[label] - m - std::log(z));
  if (!std::isfinite(loss)) fail(Errc::non_finite_loss, "loss diverged");
  return loss;
}

template <typename T>
ForwardResult SpikingNet<T>::forward(const events::VoxelGrid& input, SpikeMode mode) const {
  ForwardResult result;
  run(input, mode, &result, nullptr, -1);
  return result;
}

template <typename T>
typename SpikingNet<T>::Gradients SpikingNet<T>::zero_gradients() const {
  Gradients g;
  g.by_tensor.resize(tensor_count());
  for (int i = 0; i < tensor_count(); ++i) g.by_tensor[i].assign(tensor(i).size(), T{0});
  return g;
}

template <typename T>
double SpikingNet<T>::backward(const events::VoxelGrid& input, int label, SpikeMode mode,
                               Gradients& grads) const {
  if (label < 0 || label >= class_count()) fail(Errc::out_of_range, "label out of range");
  Tape tape;
  ForwardResult result;
  const double loss = run(input, mode, &result, &tape, label);

  // d loss / d logits
  const double m = *std::max_element(result.logits.begin(), result.logits.end());
  double z = 0.0;
  for (double v : result.logits) z += std::exp(v - m);
  std::vector<T> dlogits(class_count());
  for (int c = 0; c < class_count(); ++c)
    dlogits[c] =
        static_cast<T>(std::exp(result.logits[c] - m) / z - (c == label ? 1.0 : 0.0));

  const int bins = spec_.bins;
  const int layer_n = layer_count();
  std::vector<std::vector<T>> du_state(layer_n);  // grad wrt post-reset state
  for (int l = 0; l < layer_n; ++l) du_state[l].assign(layers_[l].out_features, T{0});

  std::vector<T> d_current;
  std::vector<T> dx;
  for (int b = bins - 1; b >= 0; --b) {
    std::vector<T> dspike = dlogits;  // grad into the top layer's emitted value at bin b
    for (int l = layer_n - 1; l >= 0; --l) {
      const Layer& layer = layers_[l];
      const LifParams& lif = layer.spec.lif;
      const T leak = static_cast<T>(lif.dt / lif.tau_m);
      const std::vector<T>& u_int = tape.u_integrated[b][l];
      const std::vector<std::uint8_t>& hard = tape.hard[b][l];
      d_current.assign(layer.out_features, T{0});
      for (int i = 0; i < layer.out_features; ++i) {
        // Threshold derivative replaced by the surrogate; the reset
        // assignment is gradient-stopped, so state gradient survives only
        // where the neuron did not fire.
        const T sg = static_cast<T>(
            surrogate_derivative(static_cast<double>(u_int[i]), lif.theta, spec_.surrogate.k));
        const T du_int = dspike[i] * sg + du_state[l][i] * static_cast<T>(hard[i] ? 0 : 1);
        du_state[l][i] = du_int * (T{1} - leak);
        d_current[i] = du_int * leak * static_cast<T>(lif.R);
      }
      backward_layer(layer, tape.input[b][l], d_current, dx, grads.by_tensor[2 * l],
                     grads.by_tensor[2 * l + 1]);
      if (l > 0) dspike = dx;
    }
  }
  return loss;
}

template <typename T>
void adamw_update(std::vector<T>& param, const std::vector<T>& grad, AdamWState<T>& state,
                  const AdamWParams& hyper) {
  if (param.size() != grad.size()) fail(Errc::shape_mismatch, "param/grad size mismatch");
  if (state.m.empty()) {
    state.m.assign(param.size(), T{0});
    state.v.assign(param.size(), T{0});
  }
  if (state.m.size() != param.size()) fail(Errc::shape_mismatch, "optimizer state size mismatch");
  state.step += 1;
  const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * grad[i];
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * grad[i] * grad[i];
    const double mhat = static_cast<double>(state.m[i]) / bias1;
    const double vhat = static_cast<double>(state.v[i]) / bias2;
    const double update =
        hyper.lr * (mhat / (std::sqrt(vhat) + hyper.eps) +
                    hyper.weight_decay * static_cast<double>(param[i]));
    param[i] = static_cast<T>(static_cast<double>(param[i]) - update);
  }
}

template void adamw_update(std::vector<double>&, const std::vector<double>&, AdamWState<double>&,
                           const AdamWParams&);
template void adamw_update(std::vector<float>&, const std::vector<float>&, AdamWState<float>&,
                           const AdamWParams&);

template <typename T>
Trainer<T>::Trainer(SpikingNet<T>& net, const AdamWParams& hyper)
    : net_(net), hyper_(hyper), opt_state_(net.tensor_count()) {}

template <typename T>
double Trainer<T>::train_step(
    const std::vector<std::pair<const events::VoxelGrid*, int>>& batch) {
  if (batch.empty()) fail(Errc::empty_stream, "empty training batch");
  auto grads = net_.zero_gradients();
  double loss = 0.0;
  for (const auto& [grid, label] : batch)
    loss += net_.backward(*grid, label, SpikeMode::hard, grads);
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss)) fail(Errc::non_finite_loss, "loss diverged");
  const T scale = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  for (int i = 0; i < net_.tensor_count(); ++i) {
    for (T& g : grads.by_tensor[i]) g *= scale;
    adamw_update(net_.tensor(i), grads.by_tensor[i], opt_state_[i], hyper_);
  }
  return loss;
}

template <typename T>
double sparsity(const SpikingNet<T>& net, const std::vector<events::VoxelGrid>& dataset) {
  if (dataset.empty()) fail(Errc::empty_stream, "sparsity needs a non-empty dataset");
  if (net.layer_count() < 2) fail(Errc::shape_mismatch, "sparsity needs at least one hidden layer");
  std::size_t silent = 0, total = 0;
  for (const auto& grid : dataset) {
    ForwardResult result = net.forward(grid, SpikeMode::hard);
    for (int l = 0; l + 1 < net.layer_count(); ++l) {
      const int n = net.neuron_count(l);
      for (int i = 0; i < n; ++i) {
        bool fired = false;
        for (const auto& bin : result.spike_record[l])
          if (bin[i] != 0) {
            fired = true;
            break;
          }
        silent += fired ? 0 : 1;
        ++total;
      }
    }
  }
  return static_cast<double>(silent) / static_cast<double>(total);
}

// ---- spec (de)serialization & checkpoints ----

namespace {

json lif_to_json(const LifParams& p) {
  return json{{"tau_m", p.tau_m}, {"u_rest", p.u_rest}, {"R", p.R}, {"theta", p.theta}};
}

LifParams lif_from_json(const json& j) {
  LifParams p;
  p.tau_m = j.value("tau_m", p.tau_m);
  p.u_rest = j.value("u_rest", p.u_rest);
  p.R = j.value("R", p.R);
  p.theta = j.value("theta", p.theta);
  p.validate();
  return p;
}

}  // namespace

std::string net_spec_to_json_string(const NetSpec& spec) {
  json j;
  j["bins"] = spec.bins;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["surrogate_k"] = spec.surrogate.k;
  j["layers"] = json::array();
  for (const LayerSpec& ls : spec.layers) {
    json lj;
    if (ls.kind == LayerKind::conv2d) {
      lj["type"] = "conv2d";
      lj["out_channels"] = ls.out_channels;
      lj["kernel"] = ls.kernel;
      lj["stride"] = ls.stride;
      lj["pad"] = ls.pad;
    } else {
      lj["type"] = "dense";
      lj["units"] = ls.units;
    }
    lj["lif"] = lif_to_json(ls.lif);
    j["layers"].push_back(lj);
  }
  return j.dump();
}

NetSpec net_spec_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::schema_violation, std::string("net spec: ") + e.what());
  }
  NetSpec spec;
  try {
    spec.bins = j.value("bins", spec.bins);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.surrogate.k = j.value("surrogate_k", spec.surrogate.k);
    for (const json& lj : j.at("layers")) {
      LayerSpec ls;
      const std::string type = lj.at("type").get<std::string>();
      if (type == "conv2d") {
        ls.kind = LayerKind::conv2d;
        ls.out_channels = lj.at("out_channels").get<int>();
        ls.kernel = lj.value("kernel", ls.kernel);
        ls.stride = lj.value("stride", ls.stride);
        ls.pad = lj.value("pad", ls.pad);
      } else if (type == "dense") {
        ls.kind = LayerKind::dense;
        ls.units = lj.at("units").get<int>();
      } else {
        fail(Errc::schema_violation, "net spec: unknown layer type '" + type + "'");
      }
      if (lj.contains("lif")) ls.lif = lif_from_json(lj.at("lif"));
      spec.layers.push_back(ls);
    }
  } catch (const json::exception& e) {
    fail(Errc::schema_violation, std::string("net spec: ") + e.what());
  }
  if (spec.surrogate.k <= 0) fail(Errc::schema_violation, "surrogate_k must be positive");
  return spec;
}

namespace {

template <typename T>
io::TensorFile checkpoint_to_file(const SpikingNet<T>& net) {
  io::TensorFile file;
  json meta;
  meta["kind"] = "snn_checkpoint";
  meta["net_spec"] = json::parse(net_spec_to_json_string(net.spec()));
  meta["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";
  file.meta_json = meta.dump();
  for (int i = 0; i < net.tensor_count(); ++i) {
    io::NamedTensor t;
    t.name = net.tensor_name(i);
    for (int d : net.tensor_shape(i).dims) t.dims.push_back(static_cast<std::uint32_t>(d));
    if constexpr (std::is_same_v<T, float>) {
      t.dtype = io::Dtype::f32;
      t.bytes = io::pack_f32(net.tensor(i));
    } else {
      t.dtype = io::Dtype::f64;
      t.bytes = io::pack_f64(net.tensor(i));
    }
    file.tensors.push_back(std::move(t));
  }
  return file;
}

template <typename T>
std::unique_ptr<SpikingNet<T>> checkpoint_from_file(const io::TensorFile& file) {
  json meta;
  try {
    meta = json::parse(file.meta_json);
  } catch (const json::exception& e) {
    fail(Errc::schema_violation, std::string("checkpoint meta: ") + e.what());
  }
  if (meta.value("kind", "") != "snn_checkpoint")
    fail(Errc::schema_violation, "not an snn checkpoint");
  auto net = std::make_unique<SpikingNet<T>>(
      net_spec_from_json_string(meta.at("net_spec").dump()));
  for (int i = 0; i < net->tensor_count(); ++i) {
    const io::NamedTensor* t = file.find(net->tensor_name(i));
    if (t == nullptr)
      fail(Errc::schema_violation, "checkpoint missing tensor " + net->tensor_name(i));
    std::vector<T> values;
    if constexpr (std::is_same_v<T, float>)
      values = io::unpack_f32(*t);
    else
      values = io::unpack_f64(*t);
    if (values.size() != net->tensor(i).size())
      fail(Errc::shape_mismatch, "checkpoint tensor " + t->name + " has wrong size");
    net->tensor(i) = std::move(values);
  }
  return net;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const SpikingNet<T>& net) {
  io::save_tensor_file(path, checkpoint_to_file(net));
}

template void save_checkpoint(const std::string&, const SpikingNet<double>&);
template void save_checkpoint(const std::string&, const SpikingNet<float>&);

bool checkpoint_is_float32(const std::string& path) {
  const io::TensorFile file = io::load_tensor_file(path);
  const json meta = json::parse(file.meta_json);
  return meta.value("dtype", "f64") == "f32";
}

std::unique_ptr<SpikingNet<double>> load_checkpoint_f64(const std::string& path) {
  return checkpoint_from_file<double>(io::load_tensor_file(path));
}

std::unique_ptr<SpikingNet<float>> load_checkpoint_f32(const std::string& path) {
  return checkpoint_from_file<float>(io::load_tensor_file(path));
}

template class SpikingNet<double>;
template class SpikingNet<float>;
template class Trainer<double>;
template class Trainer<float>;
template double sparsity(const SpikingNet<double>&, const std::vector<events::VoxelGrid>&);
template double sparsity(const SpikingNet<float>&, const std::vector<events::VoxelGrid>&);

}  // namespace neuroisp::snn
