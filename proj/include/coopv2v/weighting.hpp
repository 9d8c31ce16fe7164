#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "coopv2v/autodiff.hpp"
#include "coopv2v/detector.hpp"
#include "coopv2v/nn.hpp"
#include "coopv2v/transport.hpp"

namespace coopv2v {

struct SelfSupervisedParams {
  double lambda_pos = 1.0;
  double lambda_neg = 1e-4;
  double aug_snr_pos_db = 30.0;
  double aug_snr_neg_db = -10.0;
  double rician_k = 1.0;
  int epochs = 10;
  double lr = 1e-3;
  double weight_decay = 1e-4;

  void validate() const {
    if (lambda_pos < 0.0 || lambda_neg < 0.0)
      throw std::invalid_argument("SelfSupervisedParams: lambdas must be >= 0");
    if (epochs < 1 || !(lr > 0.0))
      throw std::invalid_argument("SelfSupervisedParams: bad epochs/lr");
  }
};

/// The same shared feature after a mild and a severe channel pass, kept
/// with its clean source.
struct AugmentationPair {
  Tensor clean;
  Tensor positive;  // light distortion
  Tensor negative;  // severe distortion
};

/// Two independent flat-Rician transport passes at the configured SNRs
/// (unit distance, perfect CSI, so distortion is set purely by the SNR).
inline AugmentationPair make_augmentations(const Tensor& f, Rng& rng,
                                           const SelfSupervisedParams& sp) {
  FlatChannelConfig cfg;
  cfg.p0 = 1.0;
  cfg.distance = 1.0;
  cfg.rician_k = sp.rician_k;
  cfg.csi_mode = CsiMode::kPerfect;
  AugmentationPair pair;
  pair.clean = f;
  cfg.snr_db = sp.aug_snr_pos_db;
  pair.positive = transmit(f, cfg, rng);
  cfg.snr_db = sp.aug_snr_neg_db;
  pair.negative = transmit(f, cfg, rng);
  return pair;
}

/// CAV-level scoring network: four conv-bn-relu blocks over the
/// channel-concatenated (ego, received) pair, a dense-relu layer, two
/// output logits, softmax. The positive-class probability is the weight.
struct WeightingNet {
  ParamStore params;
  ConvBnRelu b1{"w1", 2 * PerceptionModel::kFeatChannels, 16, 2};
  ConvBnRelu b2{"w2", 16, 16, 2};
  ConvBnRelu b3{"w3", 16, 32, 2};
  ConvBnRelu b4{"w4", 32, 32, 1};
  DenseLayer fc1{"fc1", 32 * 2 * 2, 64};
  DenseLayer fc2{"fc2", 64, 2};

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x77656967687473ull));
    b1.init(params, rng);
    b2.init(params, rng);
    b3.init(params, rng);
    b4.init(params, rng);
    fc1.init(params, rng);
    fc2.init(params, rng);
  }

  /// Scalar weight node in (0,1), differentiable through the whole net.
  NodeId forward(Tape& t, NodeId f_ego, NodeId f_hat, bool train) {
    if (!t.value(f_ego).same_shape(t.value(f_hat)))
      throw std::invalid_argument(
          "WeightingNet: ego/received feature shape mismatch " +
          shape_str(t.value(f_ego).shape) + " vs " +
          shape_str(t.value(f_hat).shape));
    NodeId x = t.concat_channels(f_ego, f_hat);
    x = b1.apply(t, params, x, train);
    x = b2.apply(t, params, x, train);
    x = b3.apply(t, params, x, train);
    x = b4.apply(t, params, x, train);
    x = t.flatten(x);
    x = t.relu(fc1.apply(t, params, x));
    x = fc2.apply(t, params, x);
    NodeId dist = t.softmax(x, 0);
    return t.pick(dist, 0);
  }

  /// Eval-mode weight for a pair of feature tensors.
  double weight_eval(const Tensor& f_ego, const Tensor& f_hat) {
    Tape t;
    NodeId w = forward(t, t.constant(f_ego), t.constant(f_hat), false);
    return t.value(w)[0];
  }
};

/// Elementwise scaling of a received map by its CAV-level weight.
inline Tensor apply_weight(double w, const Tensor& f_hat) {
  Tensor out = f_hat;
  for (double& v : out.data) v *= w;
  return out;
}

struct SslGraph {
  NodeId loss;
  std::vector<NodeId> w_pos;
  std::vector<NodeId> w_neg;
};

/// (lambda_pos sum_k KL[S(W+ f+)||S(f)] + lambda_neg sum_k KL[S(W- f-)||S(f)]) / K
/// with S the softmax over all feature elements. Only the weighting net
/// receives gradients; the features enter as constants.
inline SslGraph self_supervised_loss(Tape& t, WeightingNet& net,
                                     const Tensor& f_ego,
                                     const std::vector<AugmentationPair>& pairs,
                                     const SelfSupervisedParams& sp,
                                     bool train) {
  sp.validate();
  if (pairs.empty())
    throw std::invalid_argument("self_supervised_loss: no augmentation pairs");
  SslGraph g;
  NodeId lpos = t.constant(Tensor::scalar(0.0));
  NodeId lneg = t.constant(Tensor::scalar(0.0));
  NodeId ego = t.constant(f_ego);
  for (const AugmentationPair& pair : pairs) {
    if (!pair.clean.same_shape(f_ego) || !pair.positive.same_shape(f_ego) ||
        !pair.negative.same_shape(f_ego))
      throw std::invalid_argument("self_supervised_loss: pair shape mismatch");
    NodeId q = t.softmax_flat(t.constant(pair.clean));
    NodeId wp = net.forward(t, ego, t.constant(pair.positive), train);
    NodeId p_pos = t.softmax_flat(t.scale_by(wp, t.constant(pair.positive)));
    lpos = t.add(lpos, t.kl_div(p_pos, q));
    NodeId wn = net.forward(t, ego, t.constant(pair.negative), train);
    NodeId p_neg = t.softmax_flat(t.scale_by(wn, t.constant(pair.negative)));
    lneg = t.add(lneg, t.kl_div(p_neg, q));
    g.w_pos.push_back(wp);
    g.w_neg.push_back(wn);
  }
  NodeId weighted = t.add(t.scale_const(lpos, sp.lambda_pos),
                          t.scale_const(lneg, sp.lambda_neg));
  g.loss = t.scale_const(weighted, 1.0 / static_cast<double>(pairs.size()));
  return g;
}

struct WeightingLogRow {
  int epoch = 0;
  double loss = 0.0;
  double mean_w_pos = 0.0;
  double mean_w_neg = 0.0;
};

/// Trains the weighting net against a frozen backbone: clean shared
/// features come from eval-mode encodes, augmentations from the flat link,
/// and only the weighting parameters step. The backbone checksum must not
/// move, otherwise the run aborts.
inline WeightingNet train_weighting(PerceptionModel& backbone,
                                    const std::vector<Scene>& scenes,
                                    const SceneConfig& scfg,
                                    const SelfSupervisedParams& sp,
                                    std::uint64_t seed,
                                    std::vector<WeightingLogRow>* log = nullptr) {
  sp.validate();
  if (scenes.empty())
    throw std::invalid_argument("train_weighting: empty scene stream");
  std::uint64_t backbone_before = backbone.params.checksum();

  WeightingNet net;
  net.init(seed);
  AdamConfig adam;
  adam.lr = sp.lr;
  adam.weight_decay = sp.weight_decay;

  Rng order_rng(derive_seed(seed, 0x73687566666c65ull));
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < sp.epochs; ++epoch) {
    // step decay: halve at each third of the run
    AdamConfig step_cfg = adam;
    if (sp.epochs >= 3) {
      if (epoch >= 2 * sp.epochs / 3)
        step_cfg.lr = adam.lr * 0.25;
      else if (epoch >= sp.epochs / 3)
        step_cfg.lr = adam.lr * 0.5;
    }
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(order_rng.uniform_int(
                    0, static_cast<int>(i) - 1))]);

    double loss_sum = 0.0, wp_sum = 0.0, wn_sum = 0.0;
    std::int64_t batches = 0, wcount = 0;
    for (int idx : order) {
      const Scene& sc = scenes[static_cast<std::size_t>(idx)];
      Tensor f_ego = backbone.encode_eval(make_agent_view(sc, 0, scfg.grid,
                                                          scfg.sensing_radius)
                                              .raster);
      std::vector<AugmentationPair> pairs;
      Rng aug_rng(derive_seed(seed, 0xA7631ull,
                              static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(idx)));
      for (std::size_t a = 1; a < sc.agents.size(); ++a) {
        Tensor f_k = backbone.encode_eval(
            make_agent_view(sc, static_cast<int>(a), scfg.grid,
                            scfg.sensing_radius)
                .raster);
        pairs.push_back(make_augmentations(f_k, aug_rng, sp));
      }
      Tape t;
      SslGraph g = self_supervised_loss(t, net, f_ego, pairs, sp, true);
      t.backward(g.loss);
      net.params.adam_step(step_cfg);
      loss_sum += t.value(g.loss)[0];
      ++batches;
      for (NodeId w : g.w_pos) wp_sum += t.value(w)[0];
      for (NodeId w : g.w_neg) wn_sum += t.value(w)[0];
      wcount += static_cast<std::int64_t>(g.w_pos.size());
    }
    if (log)
      log->push_back({epoch, loss_sum / static_cast<double>(batches),
                      wp_sum / static_cast<double>(wcount),
                      wn_sum / static_cast<double>(wcount)});
  }

  if (backbone.params.checksum() != backbone_before)
    throw std::logic_error(
        "train_weighting: backbone parameters changed during weighting "
        "training (freeze contract violated)");
  return net;
}

}  // namespace coopv2v
