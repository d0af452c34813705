#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fedcarbon/errors.hpp"
#include "fedcarbon/fl_core.hpp"
#include "fedcarbon/rng.hpp"

namespace fedcarbon {

using TokenSequence = std::vector<int>;

/// One client's corpus: token sequences over a shared vocabulary.
struct ClientDataset {
  std::vector<TokenSequence> sequences;

  long num_samples() const { return static_cast<long>(sequences.size()); }
};

/// Next-token model: a table of bigram logits, softmax-normalized per
/// preceding token. Parameters are the V*V logits in row-major order; the
/// all-zero model predicts uniformly, so its perplexity is exactly V.
class ReferenceSoftmaxLM {
public:
  explicit ReferenceSoftmaxLM(int vocab_size) : vocab_(vocab_size) {}

  int vocab_size() const { return vocab_; }
  std::size_t param_dim() const {
    return static_cast<std::size_t>(vocab_) * static_cast<std::size_t>(vocab_);
  }

  ModelParams initial_params() const {
    ModelParams p;
    p.values.assign(param_dim(), 0.0);
    return p;
  }

  /// Probability of each predicted token in the sequence (positions 1..end).
  void token_probs(const std::vector<double>& params, const TokenSequence& seq,
                   std::vector<double>& out) const {
    std::vector<double> row_probs(vocab_);
    for (std::size_t j = 1; j < seq.size(); ++j) {
      softmax_row(params, seq[j - 1], row_probs);
      out.push_back(row_probs[seq[j]]);
    }
  }

  /// Mean cross-entropy over all predicted tokens in the batch.
  double loss(const std::vector<double>& params,
              const std::vector<const TokenSequence*>& batch) const {
    std::vector<double> row_probs(vocab_);
    double total = 0.0;
    long count = 0;
    for (const TokenSequence* seq : batch) {
      for (std::size_t j = 1; j < seq->size(); ++j) {
        softmax_row(params, (*seq)[j - 1], row_probs);
        total += -std::log(row_probs[(*seq)[j]]);
        ++count;
      }
    }
    return count ? total / static_cast<double>(count) : 0.0;
  }

  /// Analytic gradient of loss: per predicted token, (softmax(row) - onehot)
  /// on the preceding token's row, averaged over the batch's token count.
  void gradient(const std::vector<double>& params,
                const std::vector<const TokenSequence*>& batch,
                std::vector<double>& grad) const {
    grad.assign(param_dim(), 0.0);
    long count = 0;
    for (const TokenSequence* seq : batch)
      count += std::max<long>(0, static_cast<long>(seq->size()) - 1);
    if (count == 0) return;
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> row_probs(vocab_);
    for (const TokenSequence* seq : batch) {
      for (std::size_t j = 1; j < seq->size(); ++j) {
        const int prev = (*seq)[j - 1];
        softmax_row(params, prev, row_probs);
        double* row = grad.data() + static_cast<std::size_t>(prev) * vocab_;
        for (int k = 0; k < vocab_; ++k) row[k] += row_probs[k] * inv;
        row[(*seq)[j]] -= inv;
      }
    }
  }

private:
  void softmax_row(const std::vector<double>& params, int prev,
                   std::vector<double>& out) const {
    const double* row = params.data() + static_cast<std::size_t>(prev) * vocab_;
    const double mx = *std::max_element(row, row + vocab_);
    double denom = 0.0;
    for (int k = 0; k < vocab_; ++k) {
      out[k] = std::exp(row[k] - mx);
      denom += out[k];
    }
    for (int k = 0; k < vocab_; ++k) out[k] /= denom;
  }

  int vocab_;
};

/// Mini-batch SGD, no momentum, batches taken in dataset order. The returned
/// delta is final minus start; assigned_version records the base model.
inline ClientUpdate client_local_train(const ReferenceSoftmaxLM& task,
                                       const ModelParams& start,
                                       const ClientDataset& data,
                                       const ClientTrainConfig& cfg) {
  if (data.sequences.empty()) throw EmptyClientData();
  std::vector<double> params = start.values;
  std::vector<double> grad;
  const std::size_t n = data.sequences.size();
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const TokenSequence*> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.sequences[i]);
      task.gradient(params, batch, grad);
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= cfg.client_lr * grad[i];
    }
  }
  ClientUpdate u;
  u.delta.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) u.delta[i] = params[i] - start.values[i];
  u.num_samples = data.num_samples();
  u.assigned_version = start.version;
  return u;
}

/// Perplexity over the concatenated predicted tokens of every held-out
/// client's data.
inline double evaluate_heldout(const ReferenceSoftmaxLM& task, const ModelParams& model,
                               const std::vector<ClientDataset>& heldout_clients) {
  if (heldout_clients.empty()) throw EmptyHeldout();
  std::vector<double> probs;
  for (const ClientDataset& client : heldout_clients)
    for (const TokenSequence& seq : client.sequences)
      task.token_probs(model.values, seq, probs);
  return perplexity(probs);
}

/// Fraction of tokens every client draws from the shared head of the Zipf
/// law; the rest go through a client-private permutation. Keeps the federated
/// objective learnable while each client's unigram marginal stays skewed its
/// own way.
inline constexpr double kSharedTokenFraction = 0.7;

/// Deterministic per-client corpus: tokens drawn from a Zipf-skewed unigram,
/// routed through a client-specific vocabulary permutation 30% of the time,
/// sequence lengths uniform in [4, 16]. Same (seed, num_samples, vocab)
/// always yields the same data.
inline ClientDataset make_client_dataset(std::uint64_t seed, int num_samples,
                                         int vocab_size) {
  Rng rng = make_rng(seed, 0xda7a5eedULL);
  std::vector<int> perm(vocab_size);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  BoundedZipf zipf(1.1, vocab_size);
  std::uniform_int_distribution<int> len_dist(4, 16);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ClientDataset data;
  data.sequences.reserve(num_samples);
  for (int i = 0; i < num_samples; ++i) {
    TokenSequence seq(len_dist(rng));
    for (int& tok : seq) {
      const int rank = static_cast<int>(zipf.sample(rng)) - 1;
      tok = unit(rng) < kSharedTokenFraction ? rank : perm[rank];
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

}  // namespace fedcarbon
