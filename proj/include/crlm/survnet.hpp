#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/rng.hpp"

namespace crlm::surv {

// Autoencoder + multiple-instance hazard regressor. Tumors are instances
// inside a patient-level bag; the bottleneck feeds both the decoder and a
// small regressor that emits one hazard per tumor. Tumor hazards are
// pooled to a patient hazard, and the whole thing trains against
// (1 - alpha) * MSE + alpha * Cox partial likelihood.

struct PatientBag {
  std::string patient_id;
  std::vector<std::vector<double>> instances;  // normalized feature vectors
  double time_months = 0.0;
  int event = 0;
  int largest_index = -1;  // index of the largest tumor, -1 if unknown
};

enum class PoolMode { Mean, Largest, Max, Lse };

inline PoolMode pool_from_string(const std::string& s) {
  if (s == "mean") return PoolMode::Mean;
  if (s == "largest") return PoolMode::Largest;
  if (s == "max") return PoolMode::Max;
  if (s == "lse") return PoolMode::Lse;
  throw DataError("unknown pooling mode: " + s);
}

inline const char* pool_name(PoolMode m) {
  switch (m) {
    case PoolMode::Mean: return "mean";
    case PoolMode::Largest: return "largest";
    case PoolMode::Max: return "max";
    case PoolMode::Lse: return "lse";
  }
  return "lse";
}

// ---- pooling ----

namespace detail {

inline size_t first_argmax(std::span<const double> v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

// Patient-level hazard from tumor-level hazards. LSE uses the max-shifted
// form m + log1p(sum_{i != argmax} e^{eta_i - m}), which is exact for
// single-instance bags and cannot overflow.
inline double pool(std::span<const double> hazards, PoolMode mode,
                   int largest_index = -1) {
  if (hazards.empty()) throw DataError("pooling over empty hazard set");
  switch (mode) {
    case PoolMode::Mean: {
      double s = 0.0;
      for (double h : hazards) s += h;
      return s / static_cast<double>(hazards.size());
    }
    case PoolMode::Largest: {
      if (largest_index < 0 ||
          largest_index >= static_cast<int>(hazards.size()))
        throw DataError("largest pooling needs a valid largest-tumor index");
      return hazards[static_cast<size_t>(largest_index)];
    }
    case PoolMode::Max:
      return hazards[detail::first_argmax(hazards)];
    case PoolMode::Lse: {
      const size_t arg = detail::first_argmax(hazards);
      const double m = hazards[arg];
      double rest = 0.0;
      for (size_t i = 0; i < hazards.size(); ++i)
        if (i != arg) rest += std::exp(hazards[i] - m);
      return m + std::log1p(rest);
    }
  }
  throw DataError("unknown pooling mode");
}

// d(pooled) / d(eta_i)
inline std::vector<double> pool_gradient(std::span<const double> hazards,
                                         PoolMode mode,
                                         int largest_index = -1) {
  const size_t n = hazards.size();
  std::vector<double> w(n, 0.0);
  switch (mode) {
    case PoolMode::Mean:
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
      break;
    case PoolMode::Largest:
      if (largest_index < 0 || largest_index >= static_cast<int>(n))
        throw DataError("largest pooling needs a valid largest-tumor index");
      w[static_cast<size_t>(largest_index)] = 1.0;
      break;
    case PoolMode::Max:
      w[detail::first_argmax(hazards)] = 1.0;
      break;
    case PoolMode::Lse: {
      const double m = hazards[detail::first_argmax(hazards)];
      double total = 0.0;
      for (size_t i = 0; i < n; ++i) {
        w[i] = std::exp(hazards[i] - m);
        total += w[i];
      }
      for (double& x : w) x /= total;
      break;
    }
  }
  return w;
}

// ---- losses ----

// (1/N) * sum_i ||x_i - xhat_i||^2 over instances.
inline double loss_mse(const std::vector<std::vector<double>>& x,
                       const std::vector<std::vector<double>>& xhat) {
  if (x.size() != xhat.size()) throw DataError("MSE shape mismatch");
  if (x.empty()) throw DataError("MSE over empty batch");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != xhat[i].size()) throw DataError("MSE shape mismatch");
    for (size_t j = 0; j < x[i].size(); ++j) {
      const double d = x[i][j] - xhat[i][j];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(x.size());
}

struct CoxLoss {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d eta
};

// Negative Cox partial log-likelihood, Breslow convention for tied event
// times, max-shifted for stability.
inline CoxLoss loss_cox_with_grad(std::span<const double> eta,
                                  std::span<const double> times,
                                  std::span<const int> events,
                                  bool want_grad = true) {
  const size_t n = eta.size();
  if (times.size() != n || events.size() != n)
    throw DataError("Cox loss input length mismatch");
  bool any_event = false;
  for (int e : events) any_event |= (e == 1);
  if (!any_event) throw DataError("no uncensored patient in batch");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    return a < b;
  });

  double m = eta[0];
  for (double e : eta) m = std::max(m, e);

  // group indices by distinct time, ascending
  std::vector<std::pair<size_t, size_t>> groups;  // [begin, end) into order
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && times[order[j]] == times[order[i]]) ++j;
    groups.emplace_back(i, j);
    i = j;
  }

  // risk-set sums S(g) = sum over subjects with time >= t_g of e^(eta - m)
  std::vector<double> risk(groups.size(), 0.0);
  double running = 0.0;
  for (size_t g = groups.size(); g-- > 0;) {
    for (size_t k = groups[g].first; k < groups[g].second; ++k)
      running += std::exp(eta[order[k]] - m);
    risk[g] = running;
  }

  CoxLoss out;
  if (want_grad) out.grad.assign(n, 0.0);
  double cum = 0.0;  // sum over event groups so far of d_g / S(g)
  for (size_t g = 0; g < groups.size(); ++g) {
    size_t d_g = 0;
    for (size_t k = groups[g].first; k < groups[g].second; ++k) {
      const size_t i = order[k];
      if (events[i] == 1) {
        ++d_g;
        out.value -= (eta[i] - m) - std::log(risk[g]);
      }
    }
    if (d_g > 0) cum += static_cast<double>(d_g) / risk[g];
    if (want_grad) {
      for (size_t k = groups[g].first; k < groups[g].second; ++k) {
        const size_t i = order[k];
        out.grad[i] = -static_cast<double>(events[i]) +
                      std::exp(eta[i] - m) * cum;
      }
    }
  }
  return out;
}

inline double loss_cox(std::span<const double> eta,
                       std::span<const double> times,
                       std::span<const int> events) {
  return loss_cox_with_grad(eta, times, events, false).value;
}

// ---- the network ----

struct NetConfig {
  int input_dim = 0;
  std::vector<int> encoder = {64, 32, 16};  // bottleneck is the last entry
  std::vector<int> regressor = {8};         // hidden sizes before the scalar
  double dropout = 0.2;

  void validate() const {
    if (input_dim <= 0) throw DataError("input_dim must be positive");
    if (encoder.empty()) throw DataError("encoder needs at least one layer");
    for (int s : encoder)
      if (s <= 0) throw DataError("encoder sizes must be positive");
    for (int s : regressor)
      if (s <= 0) throw DataError("regressor sizes must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
      throw DataError("dropout must be in [0, 1)");
  }
};

class Network {
 public:
  struct Layer {
    int in = 0, out = 0;
    bool relu = false;     // hidden layers only
    bool dropout = false;  // hidden layers only
    size_t w_off = 0, b_off = 0;
  };

  Network() = default;

  static Network init(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    Network net;
    net.cfg_ = cfg;

    auto add = [&](int in, int out, bool hidden) {
      Layer l;
      l.in = in;
      l.out = out;
      l.relu = hidden;
      l.dropout = hidden;
      net.layers_.push_back(l);
    };

    int prev = cfg.input_dim;
    for (int s : cfg.encoder) {
      add(prev, s, true);
      prev = s;
    }
    net.n_encoder_ = cfg.encoder.size();

    // mirrored decoder back to the input dimension, linear output
    std::vector<int> dec(cfg.encoder.rbegin() + 1, cfg.encoder.rend());
    dec.push_back(cfg.input_dim);
    prev = cfg.encoder.back();
    for (size_t i = 0; i < dec.size(); ++i) {
      add(prev, dec[i], i + 1 < dec.size());
      prev = dec[i];
    }
    net.n_decoder_ = dec.size();

    prev = cfg.encoder.back();
    for (int s : cfg.regressor) {
      add(prev, s, true);
      prev = s;
    }
    add(prev, 1, false);  // linear scalar hazard
    net.n_regressor_ = cfg.regressor.size() + 1;

    size_t off = 0;
    for (auto& l : net.layers_) {
      l.w_off = off;
      off += static_cast<size_t>(l.in) * l.out;
      l.b_off = off;
      off += static_cast<size_t>(l.out);
    }
    net.params_.assign(off, 0.0);

    // He-style uniform fan-in init, biases zero
    Rng rng(derive_seed(seed, RngStream::NetInit));
    for (const auto& l : net.layers_) {
      const double bound = std::sqrt(6.0 / l.in);
      for (size_t i = 0; i < static_cast<size_t>(l.in) * l.out; ++i)
        net.params_[l.w_off + i] = rng.uniform(-bound, bound);
    }
    return net;
  }

  const NetConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }
  size_t n_encoder() const { return n_encoder_; }
  size_t n_decoder() const { return n_decoder_; }
  size_t n_regressor() const { return n_regressor_; }
  size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Cached activations for one instance, used by backward.
  struct Cache {
    std::vector<std::vector<double>> pre;  // pre-activation per layer
    std::vector<std::vector<double>> act;  // post relu/dropout per layer
    std::vector<double> input;
    std::vector<double> bottleneck;
  };

  struct InstanceOut {
    std::vector<double> reconstruction;
    double hazard = 0.0;
  };

  // masks: one vector per dropout-enabled layer, in layer order; null for
  // inference (dropout off).
  InstanceOut forward_instance(const std::vector<double>& x,
                               const std::vector<std::vector<double>>* masks,
                               Cache* cache) const {
    if (static_cast<int>(x.size()) != cfg_.input_dim)
      throw DataError("instance dimension mismatch");
    if (cache) {
      cache->pre.assign(layers_.size(), {});
      cache->act.assign(layers_.size(), {});
      cache->input = x;
    }

    size_t mask_idx = 0;
    auto run = [&](size_t layer_index, const std::vector<double>& in) {
      const Layer& l = layers_[layer_index];
      std::vector<double> out(static_cast<size_t>(l.out), 0.0);
      for (int o = 0; o < l.out; ++o) {
        double s = params_[l.b_off + o];
        const double* w = &params_[l.w_off + static_cast<size_t>(o) * l.in];
        for (int i = 0; i < l.in; ++i) s += w[i] * in[i];
        out[static_cast<size_t>(o)] = s;
      }
      if (cache) cache->pre[layer_index] = out;
      if (l.relu)
        for (double& v : out) v = v > 0.0 ? v : 0.0;
      if (l.dropout) {
        if (masks) {
          const auto& m = (*masks)[mask_idx];
          for (int o = 0; o < l.out; ++o) out[static_cast<size_t>(o)] *= m[o];
        }
        ++mask_idx;
      }
      if (cache) cache->act[layer_index] = out;
      return out;
    };

    std::vector<double> a = x;
    for (size_t li = 0; li < n_encoder_; ++li) a = run(li, a);
    const std::vector<double> z = a;
    if (cache) cache->bottleneck = z;

    std::vector<double> recon = z;
    for (size_t li = n_encoder_; li < n_encoder_ + n_decoder_; ++li)
      recon = run(li, recon);

    std::vector<double> r = z;
    for (size_t li = n_encoder_ + n_decoder_; li < layers_.size(); ++li)
      r = run(li, r);

    return InstanceOut{std::move(recon), r[0]};
  }

  // Accumulates parameter gradients for one instance into `grad`.
  void backward_instance(const Cache& cache,
                         const std::vector<std::vector<double>>* masks,
                         const std::vector<double>& d_recon, double d_hazard,
                         std::vector<double>& grad) const {
    // dropout-layer ordinal for each layer index
    auto mask_ordinal = [&](size_t layer_index) {
      size_t ord = 0;
      for (size_t li = 0; li < layer_index; ++li)
        if (layers_[li].dropout) ++ord;
      return ord;
    };

    auto layer_backward = [&](size_t layer_index, const std::vector<double>& in,
                              std::vector<double> dout) {
      const Layer& l = layers_[layer_index];
      if (l.dropout && masks) {
        const auto& m = (*masks)[mask_ordinal(layer_index)];
        for (int o = 0; o < l.out; ++o) dout[static_cast<size_t>(o)] *= m[o];
      }
      if (l.relu) {
        const auto& pre = cache.pre[layer_index];
        for (int o = 0; o < l.out; ++o)
          if (pre[static_cast<size_t>(o)] <= 0.0)
            dout[static_cast<size_t>(o)] = 0.0;
      }
      std::vector<double> din(static_cast<size_t>(l.in), 0.0);
      for (int o = 0; o < l.out; ++o) {
        const double d = dout[static_cast<size_t>(o)];
        if (d == 0.0) continue;
        double* gw = &grad[l.w_off + static_cast<size_t>(o) * l.in];
        const double* w = &params_[l.w_off + static_cast<size_t>(o) * l.in];
        for (int i = 0; i < l.in; ++i) {
          gw[i] += d * in[i];
          din[static_cast<size_t>(i)] += d * w[i];
        }
        grad[l.b_off + o] += d;
      }
      return din;
    };

    auto input_of = [&](size_t layer_index,
                        size_t block_first) -> const std::vector<double>& {
      if (layer_index == 0) return cache.input;
      if (layer_index == block_first) return cache.bottleneck;
      return cache.act[layer_index - 1];
    };

    // decoder block
    std::vector<double> d = d_recon;
    const size_t dec_first = n_encoder_;
    for (size_t li = n_encoder_ + n_decoder_; li-- > dec_first;)
      d = layer_backward(li, input_of(li, dec_first), std::move(d));
    std::vector<double> dz = std::move(d);

    // regressor block
    std::vector<double> dr{d_hazard};
    const size_t reg_first = n_encoder_ + n_decoder_;
    for (size_t li = layers_.size(); li-- > reg_first;)
      dr = layer_backward(li, input_of(li, reg_first), std::move(dr));
    for (size_t j = 0; j < dz.size(); ++j) dz[j] += dr[j];

    // encoder block
    for (size_t li = n_encoder_; li-- > 0;)
      dz = layer_backward(li, input_of(li, 0), std::move(dz));
  }

  size_t dropout_layer_count() const {
    size_t n = 0;
    for (const auto& l : layers_)
      if (l.dropout) ++n;
    return n;
  }

 private:
  NetConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  size_t n_encoder_ = 0, n_decoder_ = 0, n_regressor_ = 0;
};

// Inverted-dropout masks for a batch, one entry per instance per
// dropout-enabled layer.
struct DropoutPlan {
  std::vector<std::vector<std::vector<double>>> masks;  // [instance][layer][unit]

  static DropoutPlan make(const Network& net, size_t n_instances, double rate,
                          Rng& rng) {
    DropoutPlan plan;
    if (rate <= 0.0) return plan;  // empty plan = identity
    const double keep_scale = 1.0 / (1.0 - rate);
    plan.masks.resize(n_instances);
    std::vector<int> sizes;
    for (const auto& l : net.layers())
      if (l.dropout) sizes.push_back(l.out);
    for (size_t i = 0; i < n_instances; ++i) {
      plan.masks[i].resize(sizes.size());
      for (size_t li = 0; li < sizes.size(); ++li) {
        auto& m = plan.masks[i][li];
        m.resize(static_cast<size_t>(sizes[li]));
        for (auto& v : m) v = rng.uniform() < rate ? 0.0 : keep_scale;
      }
    }
    return plan;
  }
};

// ---- batch loss ----

struct BatchEval {
  double loss = 0.0;
  double mse = 0.0;
  double cox = 0.0;
  std::vector<double> patient_hazards;
  std::vector<std::vector<double>> tumor_hazards;  // per bag
};

// (1 - alpha) * MSE + alpha * Cox over a batch of bags. When `grad` is
// non-null it is resized and filled with d loss / d params. With
// alpha == 0 the Cox term is skipped entirely, so event-free batches are
// legal in pure-reconstruction mode.
inline BatchEval combined_loss(const Network& net,
                               std::span<const PatientBag* const> bags,
                               PoolMode mode, double alpha,
                               const DropoutPlan* plan,
                               std::vector<double>* grad) {
  if (bags.empty()) throw DataError("empty batch");
  if (alpha < 0.0 || alpha > 1.0) throw DataError("alpha must be in [0,1]");

  size_t n_instances = 0;
  for (const auto* b : bags) {
    if (b->instances.empty())
      throw DataError("bag " + b->patient_id + " has no instances");
    n_instances += b->instances.size();
  }

  const bool use_plan = plan && !plan->masks.empty();
  if (use_plan && plan->masks.size() != n_instances)
    throw DataError("dropout plan does not match batch");

  BatchEval ev;
  std::vector<Network::Cache> caches(grad ? n_instances : 0);
  std::vector<Network::InstanceOut> outs(n_instances);

  size_t flat = 0;
  for (const auto* b : bags) {
    std::vector<double> hazards;
    hazards.reserve(b->instances.size());
    for (const auto& x : b->instances) {
      const auto* masks = use_plan ? &plan->masks[flat] : nullptr;
      outs[flat] = net.forward_instance(x, masks,
                                        grad ? &caches[flat] : nullptr);
      hazards.push_back(outs[flat].hazard);
      ++flat;
    }
    ev.patient_hazards.push_back(pool(hazards, mode, b->largest_index));
    ev.tumor_hazards.push_back(std::move(hazards));
  }

  // reconstruction term
  flat = 0;
  double mse_acc = 0.0;
  for (const auto* b : bags)
    for (const auto& x : b->instances) {
      const auto& xh = outs[flat].reconstruction;
      for (size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - xh[j];
        mse_acc += d * d;
      }
      ++flat;
    }
  ev.mse = mse_acc / static_cast<double>(n_instances);

  // survival term
  CoxLoss cox;
  if (alpha > 0.0) {
    std::vector<double> times;
    std::vector<int> events;
    for (const auto* b : bags) {
      times.push_back(b->time_months);
      events.push_back(b->event);
    }
    cox = loss_cox_with_grad(ev.patient_hazards, times, events,
                             grad != nullptr);
    ev.cox = cox.value;
  }
  ev.loss = (1.0 - alpha) * ev.mse + alpha * ev.cox;

  if (grad) {
    grad->assign(net.param_count(), 0.0);
    const double mse_scale =
        (1.0 - alpha) * 2.0 / static_cast<double>(n_instances);
    flat = 0;
    size_t bag_idx = 0;
    for (const auto* b : bags) {
      const auto& hazards = ev.tumor_hazards[bag_idx];
      std::vector<double> wts(hazards.size(), 0.0);
      if (alpha > 0.0) {
        wts = pool_gradient(hazards, mode, b->largest_index);
        const double dpool = alpha * cox.grad[bag_idx];
        for (double& w : wts) w *= dpool;
      }
      for (size_t t = 0; t < b->instances.size(); ++t) {
        const auto& x = b->instances[t];
        const auto& xh = outs[flat].reconstruction;
        std::vector<double> d_recon(x.size());
        for (size_t j = 0; j < x.size(); ++j)
          d_recon[j] = mse_scale * (xh[j] - x[j]);
        const auto* masks = use_plan ? &plan->masks[flat] : nullptr;
        net.backward_instance(caches[flat], masks, d_recon, wts[t], *grad);
        ++flat;
      }
      ++bag_idx;
    }
  }
  return ev;
}

// Inference-mode forward for one bag (dropout off).
struct BagForward {
  std::vector<std::vector<double>> reconstructions;
  std::vector<double> tumor_hazards;
  double patient_hazard = 0.0;
};

inline BagForward forward_bag(const Network& net, const PatientBag& bag,
                              PoolMode mode) {
  if (bag.instances.empty())
    throw DataError("bag " + bag.patient_id + " has no instances");
  BagForward out;
  for (const auto& x : bag.instances) {
    auto io = net.forward_instance(x, nullptr, nullptr);
    out.tumor_hazards.push_back(io.hazard);
    out.reconstructions.push_back(std::move(io.reconstruction));
  }
  out.patient_hazard = pool(out.tumor_hazards, mode, bag.largest_index);
  return out;
}

}  // namespace crlm::surv
