#include "dispa/train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "dispa/train/metrics.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

namespace dispa::train {

using ad::Matrix;

void Dataset::validate() const {
  if (path.size() != cell_ids.size()) throw ShapeError("dataset: one pathway tensor per cell required");
  if (drug.size() != drug_ids.size() || sub.size() != drug_ids.size()) throw ShapeError("dataset: embeddings missing for some drugs");
  if (path.empty() || drug.empty()) throw Error("dataset: no cells or no drugs");
  for (const auto& m : path) {
    if (m.rows() != n_p() || m.cols() != n_g()) throw ShapeError("dataset: pathway tensors differ in shape");
  }
  for (std::size_t i = 0; i < drug.size(); ++i) {
    if (drug[i].rows() != 1 || drug[i].cols() != d_e()) throw ShapeError("dataset: drug embedding shape for " + drug_ids[i]);
    if (sub[i].rows() == 0 || sub[i].cols() != d_e()) throw ShapeError("dataset: substructure embeddings for " + drug_ids[i]);
  }
  for (const auto& p : pairs) {
    if (p.cell >= cell_ids.size() || p.drug >= drug_ids.size()) throw Error("dataset: pair refers to an unknown id");
    if (!std::isfinite(p.y)) throw Error("dataset: non-finite response");
  }
}

data::ResponseTable Dataset::responses() const {
  data::ResponseTable t;
  t.rows.reserve(pairs.size());
  for (const auto& p : pairs) t.rows.push_back({cell_ids[p.cell], drug_ids[p.drug], p.y});
  return t;
}

void RunConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("run config: learning rate must be positive");
  if (batch_size == 0 || epochs == 0 || patience == 0) throw Error("run config: batch size, epochs and patience must be positive");
  if (threads == 0) throw Error("run config: threads must be positive");
}

namespace {

struct ChunkOut {
  std::array<Matrix, model::kParamCount> grads;
  double sse = 0.0;
};

ChunkOut run_chunk(const model::ModelParams& params, const Dataset& data, const std::size_t* idx, std::size_t n) {
  ad::Tape tape;
  const auto b = model::bind(tape, params, true);
  ad::Tensor loss;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& pr = data.pairs[idx[k]];
    const auto r = model::forward(b, tape.constant(data.path[pr.cell]), tape.constant(data.drug[pr.drug]),
                                  tape.constant(data.sub[pr.drug]));
    const auto se = ad::mse(r.prediction, tape.constant(Matrix(1, 1, pr.y)));
    loss = loss.valid() ? ad::add(loss, se) : se;
  }
  ChunkOut out;
  out.sse = loss.value()(0, 0);
  auto g = tape.backward(loss);
  for (std::size_t i = 0; i < model::kParamCount; ++i) out.grads[i] = g.take(b.t[i]);
  return out;
}

// Runs f(chunk) for every chunk index, on up to `threads` workers.
template <typename F>
void for_chunks(std::size_t n_chunks, std::size_t threads, F&& f) {
  const std::size_t workers = std::min(threads, n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) f(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < n_chunks && !failed; c = next++) {
        try {
          f(c);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Adam {
  explicit Adam(const model::ModelParams& p, double lr) : lr(lr) {
    for (std::size_t i = 0; i < model::kParamCount; ++i) {
      m[i] = Matrix(p.tensors[i].rows(), p.tensors[i].cols());
      v[i] = m[i];
    }
  }

  void step(model::ModelParams& p, const std::array<Matrix, model::kParamCount>& g) {
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (std::size_t i = 0; i < model::kParamCount; ++i) {
      auto theta = p.tensors[i].data();
      auto mi = m[i].data();
      auto vi = v[i].data();
      const auto gi = g[i].data();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        mi[k] = kBeta1 * mi[k] + (1.0 - kBeta1) * gi[k];
        vi[k] = kBeta2 * vi[k] + (1.0 - kBeta2) * gi[k] * gi[k];
        theta[k] -= lr * (mi[k] / c1) / (std::sqrt(vi[k] / c2) + kEps);
      }
    }
  }

  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double lr;
  std::size_t t = 0;
  std::array<Matrix, model::kParamCount> m, v;
};

double mse_of(const Dataset& data, const std::vector<std::size_t>& pairs, const std::vector<double>& pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) s += std::pow(pred[i] - data.pairs[pairs[i]].y, 2);
  return s / static_cast<double>(pairs.size());
}

}  // namespace

std::vector<double> predict_pairs(const model::ModelParams& params, const Dataset& data,
                                  const std::vector<std::size_t>& pairs, std::size_t threads) {
  std::vector<double> out(pairs.size());
  const std::size_t n_chunks = (pairs.size() + kChunkPairs - 1) / kChunkPairs;
  for_chunks(n_chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(pairs.size(), (c + 1) * kChunkPairs);
    for (std::size_t k = c * kChunkPairs; k < end; ++k) {
      const auto& pr = data.pairs.at(pairs[k]);
      out[k] = model::predict(params, data.path[pr.cell], data.drug[pr.drug], data.sub[pr.drug]);
    }
  });
  return out;
}

TrainResult train(const Dataset& data, const Split& split, const RunConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  data.validate();
  if (split.train.empty()) throw Error("train: empty training set");
  if (split.val.empty()) throw Error("train: empty validation set (needed for early stopping)");

  auto mc = config.model;
  mc.n_p = data.n_p();
  mc.n_g = data.n_g();
  mc.d_e = data.d_e();
  auto params = model::ModelParams::init(mc, config.seed + kInitSeedOffset);
  rnd::Engine shuffle_rng(config.seed + kShuffleSeedOffset);
  Adam adam(params, config.learning_rate);

  TrainResult res;
  res.initial_train_loss = mse_of(data, split.train, predict_pairs(params, data, split.train, config.threads));
  res.best = params;
  res.best_val_rmse = INFINITY;

  std::vector<std::size_t> order = split.train;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rnd::shuffle(order, shuffle_rng);
    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bsz = std::min(config.batch_size, order.size() - start);
      const std::size_t n_chunks = (bsz + kChunkPairs - 1) / kChunkPairs;
      std::vector<ChunkOut> chunks(n_chunks);
      try {
        for_chunks(n_chunks, config.threads, [&](std::size_t c) {
          const std::size_t off = c * kChunkPairs;
          chunks[c] = run_chunk(params, data, order.data() + start + off, std::min(kChunkPairs, bsz - off));
        });
      } catch (const ad::NonFiniteError& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                    std::to_string(start) + ": " + e.what());
      }
      std::array<Matrix, model::kParamCount> grad = std::move(chunks[0].grads);
      sse += chunks[0].sse;
      for (std::size_t c = 1; c < n_chunks; ++c) {
        for (std::size_t i = 0; i < model::kParamCount; ++i) grad[i] += chunks[c].grads[i];
        sse += chunks[c].sse;
      }
      for (auto& g : grad) g *= 1.0 / static_cast<double>(bsz);
      if (!std::isfinite(sse)) throw Error("training loss became non-finite at epoch " + std::to_string(epoch));
      adam.step(params, grad);
    }

    const auto val_pred = predict_pairs(params, data, split.val, config.threads);
    const EpochLog log{epoch, sse / static_cast<double>(order.size()), std::sqrt(mse_of(data, split.val, val_pred))};
    res.history.push_back(log);
    if (log.val_rmse < res.best_val_rmse) {
      res.best_val_rmse = log.val_rmse;
      res.best_epoch = epoch;
      res.best = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      res.stopped_early = true;
      break;
    }
    if (on_epoch && !on_epoch(log)) break;
  }
  return res;
}

MetricsReport score(const Dataset& data, const std::vector<std::size_t>& pairs, const std::vector<double>& pred) {
  if (pairs.empty()) throw Error("evaluate: empty pair set");
  if (pred.size() != pairs.size()) throw ShapeError("evaluate: prediction count differs from pair count");
  MetricsReport r;
  r.n = pairs.size();
  std::vector<double> obs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) obs[i] = data.pairs.at(pairs[i]).y;
  if (pairs.size() >= 2) {
    r.rmse = metric_rmse(pred, obs);
    r.pcc = metric_pcc(pred, obs);
    r.scc = metric_scc(pred, obs);
  } else {
    r.rmse = std::abs(pred[0] - obs[0]);
    r.pcc = r.scc = NAN;
  }
  auto groups = [&](bool by_drug) {
    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> g;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = data.pairs[pairs[i]];
      auto& slot = g[by_drug ? p.drug : p.cell];
      slot.first.push_back(pred[i]);
      slot.second.push_back(obs[i]);
    }
    std::vector<GroupMetric> out;
    for (const auto& [id, v] : g) {
      GroupMetric m{by_drug ? data.drug_ids[id] : data.cell_ids[id], v.first.size(), std::nullopt};
      if (v.first.size() >= 2) {
        try {
          m.pcc = metric_pcc(v.first, v.second);
        } catch (const Error&) {
          // constant predictions or observations: correlation undefined
        }
      }
      out.push_back(std::move(m));
    }
    return out;
  };
  r.per_drug = groups(true);
  r.per_cell = groups(false);
  return r;
}

MetricsReport evaluate(const model::ModelParams& params, const Dataset& data, const std::vector<std::size_t>& pairs,
                       std::size_t threads) {
  return score(data, pairs, predict_pairs(params, data, pairs, threads));
}

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) throw Error("mean_std: no values");
  MeanStd r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace dispa::train
