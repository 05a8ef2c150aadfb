#pragma once

// Lightweight space-time memory segmentation network.
//
// Reference (frame, mask) pairs are encoded into a key/value memory; a query
// frame reads the memory with soft attention and a small decoder turns the
// read-out into a probability mask at query resolution. Everything is built on
// the autograd graph so the output is differentiable w.r.t. both parameters
// and the raw reference mask values.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvos/autograd.hpp"
#include "cvos/maskcore.hpp"

namespace cvos {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SegHyper {
  int enc1 = 32;       // first encoder block width (also the decoder skip width)
  int enc2 = 64;       // remaining encoder block widths
  int key_dim = 32;
  int value_dim = 64;
  int dec_dim = 16;    // last decoder block width
  static constexpr int kStride = 4;

  void validate() const;
  bool operator==(const SegHyper&) const = default;
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
};

class SegModel {
 public:
  SegModel() = default;
  SegModel(SegHyper hyper, std::uint64_t seed);

  const SegHyper& hyper() const { return hyper_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  const Param& param(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Parameter layout for `hyper`, values zeroed. Used by loaders.
  static std::vector<Param> layout(const SegHyper& hyper);
  static SegModel from_params(SegHyper hyper, std::vector<Param> params);

 private:
  SegHyper hyper_;
  std::vector<Param> params_;
};

/// Memory read by attention. keys: L x key_dim; values: L x (value_dim + 1),
/// the last column holding the block-averaged reference mask.
struct MemoryBank {
  ag::Var keys;
  ag::Var values;

  std::size_t rows() const { return keys.defined() ? static_cast<std::size_t>(keys.shape()[0]) : 0; }
};

MemoryBank concat_memory(std::span<const MemoryBank> banks);

struct QueryFeatures {
  ag::Var key;    // hw x key_dim
  ag::Var value;  // value_dim x fh x fw
  ag::Var skip;   // enc1 x 2fh x 2fw
  int height = 0;
  int width = 0;
};

/// A model's parameters bound into one autograd graph. With `trainable`, the
/// parameters are leaves and param_grads() returns their gradients after
/// ag::backward().
class SegGraph {
 public:
  SegGraph(const SegModel& model, bool trainable);

  QueryFeatures encode_query(const Frame& query) const;
  // mask: H*W values in any shape. Keys are the query-encoder keys of
  // `frame`; pass them in when already computed.
  MemoryBank encode_entry(const Frame& frame, const ag::Var& mask,
                          const QueryFeatures* frame_query = nullptr) const;
  // Probability mask shaped [1,H,W].
  ag::Var decode(const QueryFeatures& query, const MemoryBank& memory) const;

  const SegModel& model() const { return *model_; }
  std::vector<std::vector<double>> param_grads() const;

 private:
  const ag::Var& p(std::size_t i) const { return bound_[i]; }

  const SegModel* model_;
  std::vector<ag::Var> bound_;
};

ag::Var mask_constant(const Mask& m);
ag::Var mask_leaf(const Mask& m);
Mask to_mask(const ag::Var& prob, int h, int w, int object_id = 1,
             MaskKind kind = MaskKind::probability);

// Encodes every reference entry. With `mask_leaves`, the masks become graph
// leaves (one per entry, in order) so gradients can be read back.
MemoryBank encode_memory(const SegGraph& graph, const ReferenceSet& refs,
                         std::vector<ag::Var>* mask_leaves = nullptr);
MemoryBank encode_memory(const SegModel& model, const ReferenceSet& refs);

Mask segment(const SegModel& model, const ReferenceSet& refs, const Frame& query);

MultiObjectMask segment_multi(const SegModel& model,
                              const std::map<int, ReferenceSet>& refs_per_object,
                              const Frame& query);

/// Forward pass that keeps the graph alive for backward_to_mask().
struct SegmentTrace {
  ag::Var prob;                      // [1,H,W]
  std::vector<ag::Var> ref_masks;    // leaves, one per reference entry
  int height = 0;
  int width = 0;

  Mask output(int object_id = 1) const { return to_mask(prob, height, width, object_id); }
};

SegmentTrace segment_traced(const SegModel& model, const ReferenceSet& refs, const Frame& query);

// Back-propagates `loss` (built from trace.prob) and returns dL/dmask for each
// reference mask. Throws NumericError on a non-finite gradient.
std::vector<Mask> backward_to_mask(const SegmentTrace& trace, const ag::Var& loss);

}  // namespace cvos
