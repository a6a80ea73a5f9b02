#include "fedac/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedac/errors.hpp"

namespace fedac {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double activate(double z, Activation a) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_derivative(double z, double act, Activation a) {
  return a == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - act * act;
}

}  // namespace

std::size_t MlpSpec::layer_param_count(int l) const {
  auto in = static_cast<std::size_t>(layer_sizes[l]);
  auto out = static_cast<std::size_t>(layer_sizes[l + 1]);
  return out * in + out;
}

std::size_t MlpSpec::layer_offset(int l) const {
  std::size_t off = 0;
  for (int i = 0; i < l; ++i) off += layer_param_count(i);
  return off;
}

std::size_t MlpSpec::total_params() const { return layer_offset(weight_layer_count()); }

std::size_t MlpSpec::split_index() const { return layer_offset(weight_layer_count() - 1); }

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3)
    throw config_error("MlpSpec: need at least one hidden layer (>= 3 layer sizes)");
  for (int s : layer_sizes)
    if (s <= 0) throw config_error("MlpSpec: layer sizes must be positive");
}

void ParamVector::validate() const {
  if (split_index == 0 || split_index >= values.size())
    throw shape_error("ParamVector: split index " + std::to_string(split_index) +
                      " out of range for " + std::to_string(values.size()) + " parameters");
  if (!all_finite(values)) throw numeric_error("ParamVector: non-finite entry");
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector p(std::vector<double>(spec.total_params(), 0.0), spec.split_index());
  for (int l = 0; l < spec.weight_layer_count(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    double* w = p.values.data() + spec.layer_offset(l);
    for (int i = 0; i < out * in; ++i) w[i] = u(rng);
    // biases left at zero
  }
  return p;
}

namespace {

struct ForwardCache {
  // activations[0] is the input; activations[l+1] the output of weight layer l.
  // pre_activations[l] holds z of weight layer l (hidden layers only get
  // activated; the last entry stores log-probabilities).
  std::vector<RealMatrix> activations;
  std::vector<RealMatrix> pre_activations;
  RealMatrix probabilities;
};

void check_layer_finite(const RealMatrix& m, int layer) {
  if (!all_finite(m.values))
    throw numeric_error("non-finite value in layer " + std::to_string(layer));
}

ForwardCache run_forward(const MlpSpec& spec, const ParamVector& params,
                         const RealMatrix& features) {
  if (features.cols != spec.input_dim())
    throw shape_error("forward: feature width " + std::to_string(features.cols) +
                      " != input dim " + std::to_string(spec.input_dim()));
  if (params.size() != spec.total_params())
    throw shape_error("forward: parameter count " + std::to_string(params.size()) +
                      " != spec total " + std::to_string(spec.total_params()));

  const int n = features.rows;
  const int layers = spec.weight_layer_count();
  ForwardCache cache;
  cache.activations.reserve(layers + 1);
  cache.pre_activations.reserve(layers);
  cache.activations.push_back(features);

  for (int l = 0; l < layers; ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double* w = params.values.data() + spec.layer_offset(l);
    const double* b = w + static_cast<std::size_t>(out) * in;
    const RealMatrix& prev = cache.activations.back();

    RealMatrix z(n, out);
    for (int r = 0; r < n; ++r) {
      const double* x = prev.values.data() + static_cast<std::size_t>(r) * in;
      double* zr = z.values.data() + static_cast<std::size_t>(r) * out;
      for (int o = 0; o < out; ++o) {
        const double* wrow = w + static_cast<std::size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += wrow[i] * x[i];
        zr[o] = acc;
      }
    }
    check_layer_finite(z, l);

    if (l + 1 < layers) {
      RealMatrix a(n, out);
      for (std::size_t i = 0; i < z.values.size(); ++i)
        a.values[i] = activate(z.values[i], spec.activation);
      cache.pre_activations.push_back(std::move(z));
      cache.activations.push_back(std::move(a));
    } else {
      // log-softmax head, stabilized by the row max
      RealMatrix logp(n, out);
      RealMatrix probs(n, out);
      for (int r = 0; r < n; ++r) {
        const double* zr = z.values.data() + static_cast<std::size_t>(r) * out;
        double zmax = zr[0];
        for (int o = 1; o < out; ++o) zmax = std::max(zmax, zr[o]);
        double sum = 0.0;
        for (int o = 0; o < out; ++o) sum += std::exp(zr[o] - zmax);
        const double lse = zmax + std::log(sum);
        for (int o = 0; o < out; ++o) {
          logp.at(r, o) = zr[o] - lse;
          probs.at(r, o) = std::exp(logp.at(r, o));
        }
      }
      check_layer_finite(logp, l);
      cache.pre_activations.push_back(std::move(logp));
      cache.probabilities = std::move(probs);
    }
  }
  return cache;
}

}  // namespace

RealMatrix forward(const MlpSpec& spec, const ParamVector& params, const RealMatrix& features) {
  return run_forward(spec, params, features).probabilities;
}

LossAndGrad loss_and_grad(const MlpSpec& spec, const ParamVector& params, const Batch& batch) {
  const int n = batch.size();
  if (n == 0) throw shape_error("loss_and_grad: empty batch");
  if (static_cast<int>(batch.labels.size()) != n)
    throw shape_error("loss_and_grad: label count != batch rows");
  const int classes = spec.class_count();
  for (int y : batch.labels)
    if (y < 0 || y >= classes) throw shape_error("loss_and_grad: label out of range");

  ForwardCache cache = run_forward(spec, params, batch.features);
  const int layers = spec.weight_layer_count();
  const RealMatrix& logp = cache.pre_activations.back();

  double loss = 0.0;
  for (int r = 0; r < n; ++r) loss -= logp.at(r, batch.labels[r]);
  loss /= n;

  LossAndGrad out;
  out.loss = loss;
  out.grad = ParamVector(std::vector<double>(spec.total_params(), 0.0), spec.split_index());

  // dz of the softmax head: (p - onehot) / n
  RealMatrix dz(n, classes);
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < classes; ++o)
      dz.at(r, o) = cache.probabilities.at(r, o) / n;
    dz.at(r, batch.labels[r]) -= 1.0 / n;
  }

  for (int l = layers - 1; l >= 0; --l) {
    const int in = spec.layer_sizes[l];
    const int rows_out = spec.layer_sizes[l + 1];
    const RealMatrix& a_prev = cache.activations[l];
    const double* w = params.values.data() + spec.layer_offset(l);
    double* dw = out.grad.values.data() + spec.layer_offset(l);
    double* db = dw + static_cast<std::size_t>(rows_out) * in;

    for (int r = 0; r < n; ++r) {
      const double* dzr = dz.values.data() + static_cast<std::size_t>(r) * rows_out;
      const double* ar = a_prev.values.data() + static_cast<std::size_t>(r) * in;
      for (int o = 0; o < rows_out; ++o) {
        double* dwrow = dw + static_cast<std::size_t>(o) * in;
        const double d = dzr[o];
        for (int i = 0; i < in; ++i) dwrow[i] += d * ar[i];
        db[o] += d;
      }
    }

    if (l > 0) {
      RealMatrix dprev(n, in);
      const RealMatrix& z_prev = cache.pre_activations[l - 1];
      for (int r = 0; r < n; ++r) {
        const double* dzr = dz.values.data() + static_cast<std::size_t>(r) * rows_out;
        double* dpr = dprev.values.data() + static_cast<std::size_t>(r) * in;
        for (int o = 0; o < rows_out; ++o) {
          const double* wrow = w + static_cast<std::size_t>(o) * in;
          const double d = dzr[o];
          for (int i = 0; i < in; ++i) dpr[i] += d * wrow[i];
        }
        for (int i = 0; i < in; ++i)
          dpr[i] *= activate_derivative(z_prev.at(r, i), a_prev.at(r, i), spec.activation);
      }
      dz = std::move(dprev);
    }
  }

  if (!std::isfinite(out.loss) || !all_finite(out.grad.values))
    throw numeric_error("loss_and_grad: non-finite result");
  return out;
}

ParamVector regularized_step(const ParamVector& params, const ParamVector& grad,
                             const ParamVector& center, std::span<const double> global_embedding,
                             double eta, double mu, double lambda) {
  const std::size_t n = params.size();
  if (grad.size() != n || center.size() != n)
    throw shape_error("regularized_step: parameter/gradient/center lengths differ");
  if (!global_embedding.empty() && global_embedding.size() != params.split_index)
    throw shape_error("regularized_step: global embedding length != split index");
  if (eta < 0.0 || mu < 0.0 || lambda < 0.0)
    throw config_error("regularized_step: eta, mu, lambda must be non-negative");

  ParamVector out = params;
  for (std::size_t i = 0; i < n; ++i)
    out.values[i] -= eta * (grad.values[i] + mu * (params.values[i] - center.values[i]));
  if (lambda != 0.0) {
    if (global_embedding.empty())
      throw shape_error("regularized_step: lambda > 0 requires a global embedding");
    for (std::size_t i = 0; i < params.split_index; ++i)
      out.values[i] -= eta * lambda * (params.values[i] - global_embedding[i]);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> split_params(const ParamVector& params) {
  params.validate();
  auto emb = params.embedding();
  auto dec = params.decision();
  return {std::vector<double>(emb.begin(), emb.end()), std::vector<double>(dec.begin(), dec.end())};
}

}  // namespace fedac
