#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dispa/ad/tensor.hpp"

namespace dispa::model {

struct ModelConfig {
  std::size_t n_p = 0;  // pathways
  std::size_t n_g = 0;  // genes per pathway row
  std::size_t d_e = 0;  // embedding width
  std::size_t d_a = 32;
  std::size_t d = 0;            // attention width; 0 means d_a
  std::size_t heads = 1;        // must divide d
  std::size_t layers = 1;       // only 1 is implemented
  std::size_t head_hidden = 0;  // 0 means d
  double lambda_init = 0.5;
  std::optional<double> lambda_override;  // fixes lambda, bypassing the learned form
  bool layer_norm = false;                // on the pooled vector
  double dropout = 0.0;                   // accepted only as 0

  std::size_t attn_width() const { return d == 0 ? d_a : d; }
  std::size_t hidden_width() const { return head_hidden == 0 ? attn_width() : head_hidden; }
  std::size_t concat_width() const { return 2 * attn_width() + d_a; }

  void validate() const;
  // key=value;... in a fixed order. Also the input to hash().
  std::string canonical() const;
  std::uint64_t hash() const;
};

enum ParamId : std::size_t {
  kPathW1, kPathB1, kPathW2, kPathB2,
  kDrugW1, kDrugB1, kDrugW2, kDrugB2,
  kSubW1, kSubB1, kSubW2, kSubB2,
  kP2SWq, kP2SWk, kP2SWv, kP2SLq1, kP2SLk1, kP2SLq2, kP2SLk2,
  kD2PWq, kD2PWk, kD2PWv, kD2PLq1, kD2PLk1, kD2PLq2, kD2PLk2,
  kHeadW1, kHeadB1, kHeadW2, kHeadB2,
  kParamCount
};

const char* param_name(std::size_t id);

struct ModelParams {
  ModelConfig config;
  std::array<ad::Matrix, kParamCount> tensors;

  // Xavier-uniform weights, zero biases, lambda vectors ~ N(0, 0.1).
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  std::size_t parameter_count() const;
};

// Parameters placed on a tape, either trainable (variables) or frozen.
struct BoundParams {
  std::array<ad::Tensor, kParamCount> t;
  const ModelConfig* config = nullptr;
};

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable);

struct EncodedFeatures {
  ad::Tensor path;  // N_p x d_a
  ad::Tensor drug;  // 1 x d_a
  ad::Tensor sub;   // N_s x d_a
};

EncodedFeatures encode_features(const BoundParams& p, const ad::Tensor& e_path, const ad::Tensor& e_drug,
                                const ad::Tensor& e_sub);

// Which attention block a call uses.
enum class View { kPath2Sub, kDrug2Path };

struct AttentionComponents {
  ad::Matrix softmax1;  // queries x keys, averaged over heads
  ad::Matrix softmax2;
  ad::Matrix net;       // softmax1 - lambda * softmax2
  double lambda = 0.0;
};

struct AttentionOutput {
  ad::Tensor output;  // queries x d
  AttentionComponents components;
};

// Differential attention: queries from q_in, keys and values from kv_in.
AttentionOutput diff_attention(const BoundParams& p, View view, const ad::Tensor& q_in, const ad::Tensor& kv_in);

AttentionOutput path2sub(const BoundParams& p, const ad::Tensor& h_path, const ad::Tensor& h_sub);
AttentionOutput drug2path(const BoundParams& p, const ad::Tensor& h_drug, const ad::Tensor& h_path);

struct AttentionRecord {
  std::string cell_id;
  std::string drug_id;
  AttentionComponents path2sub;   // N_p x N_s
  AttentionComponents drug2path;  // 1 x N_p
};

struct ForwardResult {
  ad::Tensor prediction;  // 1 x 1
  AttentionRecord record;
};

// Full network on one (cell, drug) pair. Inputs: E_path N_p x N_g, E_drug 1 x d_e, E_sub N_s x d_e.
ForwardResult forward(const BoundParams& p, const ad::Tensor& e_path, const ad::Tensor& e_drug,
                      const ad::Tensor& e_sub);

// Inference without gradients.
double predict(const ModelParams& params, const ad::Matrix& e_path, const ad::Matrix& e_drug, const ad::Matrix& e_sub,
               AttentionRecord* record = nullptr);

struct CheckpointMeta {
  std::string stats_ref;  // normalization statistics the model was trained against
  std::string note;
};

// Text checkpoint with hexfloat values; loads back bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta = {});
ModelParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace dispa::model
