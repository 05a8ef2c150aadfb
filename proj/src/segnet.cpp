#include "cvos/segnet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace cvos {

namespace {

enum P : std::size_t {
  kQ1W, kQ1B, kQ2W, kQ2B, kQ3W, kQ3B, kQ4W, kQ4B,
  kM1W, kM1B, kM2W, kM2B, kM3W, kM3B, kM4W, kM4B,
  kQKeyW, kQKeyB, kQValW, kQValB, kMValW, kMValB,
  kD1W, kD1B, kD2W, kD2B, kHeadW, kHeadB, kPriorW, kPriorB,
  kParamCount
};

// Frames enter the network centred on zero with roughly unit spread.
constexpr double kPixelShift = 0.5;
constexpr double kPixelScale = 4.0;
// Cosine affinities are multiplied by this before the softmax.
constexpr double kAffinitySharpness = 20.0;
// Initial logit contributed by the attended mask (centred on one half).
constexpr double kPriorGain = 6.0;

ag::Tensor frame_tensor(const Frame& f) {
  ag::Tensor t({3, f.height, f.width}, f.pixels);
  for (double& v : t.data) v = (v - kPixelShift) * kPixelScale;
  return t;
}

int pad_amount(int n) {
  const int s = SegHyper::kStride;
  return (s - n % s) % s;
}

}  // namespace

void SegHyper::validate() const {
  if (enc1 < 1 || enc2 < 1 || key_dim < 1 || value_dim < 1 || dec_dim < 1) {
    throw std::invalid_argument("SegHyper: all widths must be positive");
  }
}

std::vector<Param> SegModel::layout(const SegHyper& h) {
  h.validate();
  auto conv = [](std::string name, int out, int in, int k) {
    return std::array<Param, 2>{Param{name + ".w", {out, in, k, k}, {}},
                                Param{name + ".b", {out}, {}}};
  };
  auto convt = [](std::string name, int in, int out, int k) {
    return std::array<Param, 2>{Param{name + ".w", {in, out, k, k}, {}},
                                Param{name + ".b", {out}, {}}};
  };
  std::vector<std::array<Param, 2>> blocks{
      conv("q1", h.enc1, 3, 3),         conv("q2", h.enc2, h.enc1, 3),
      conv("q3", h.enc2, h.enc2, 3),    conv("q4", h.enc2, h.enc2, 3),
      conv("m1", h.enc1, 4, 3),         conv("m2", h.enc2, h.enc1, 3),
      conv("m3", h.enc2, h.enc2, 3),    conv("m4", h.enc2, h.enc2, 3),
      conv("qkey", h.key_dim, h.enc2, 1), conv("qval", h.value_dim, h.enc2, 1),
      conv("mval", h.value_dim, h.enc2, 1),
      convt("d1", 2 * h.value_dim + 1, h.enc1, 4), convt("d2", 2 * h.enc1, h.dec_dim, 4),
      conv("head", 1, h.dec_dim, 3),  conv("prior", 1, 1, 1)};
  std::vector<Param> out;
  for (auto& b : blocks) {
    for (Param& p : b) {
      p.value.assign(ag::shape_numel(p.shape), 0.0f);
      out.push_back(std::move(p));
    }
  }
  return out;
}

SegModel::SegModel(SegHyper hyper, std::uint64_t seed)
    : hyper_(hyper), params_(layout(hyper)) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    if (p.shape.size() != 4) continue;  // biases start at zero
    if (i == kPriorW) {
      p.value[0] = static_cast<float>(kPriorGain);
      params_[kPriorB].value[0] = static_cast<float>(-0.5 * kPriorGain);
      continue;
    }
    double fan_in = 0.0;
    double gain = 2.0;
    if (i == kD1W || i == kD2W) {
      // Each transposed-conv output sees in * (k/stride)^2 taps.
      fan_in = static_cast<double>(p.shape[0]) * p.shape[2] * p.shape[3] / 4.0;
    } else {
      fan_in = static_cast<double>(p.shape[1]) * p.shape[2] * p.shape[3];
    }
    if (i == kQKeyW || i == kQValW || i == kMValW || i == kHeadW) gain = 1.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    for (float& v : p.value) v = static_cast<float>(dist(rng));
  }
}

SegModel SegModel::from_params(SegHyper hyper, std::vector<Param> params) {
  auto expected = layout(hyper);
  if (params.size() != expected.size()) {
    throw std::invalid_argument("SegModel: parameter count does not match layout");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name || params[i].shape != expected[i].shape ||
        params[i].value.size() != expected[i].value.size()) {
      throw std::invalid_argument("SegModel: parameter '" + params[i].name +
                                  "' does not match layout entry '" + expected[i].name + "'");
    }
  }
  SegModel m;
  m.hyper_ = hyper;
  m.params_ = std::move(params);
  return m;
}

const Param& SegModel::param(std::string_view name) const { return params_[index_of(name)]; }

std::size_t SegModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("SegModel: no parameter named " + std::string(name));
}

std::size_t SegModel::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

bool SegModel::all_finite() const {
  for (const Param& p : params_) {
    for (float v : p.value) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

MemoryBank concat_memory(std::span<const MemoryBank> banks) {
  if (banks.empty()) throw std::invalid_argument("concat_memory: no banks");
  if (banks.size() == 1) return banks.front();
  std::vector<ag::Var> keys, values;
  for (const MemoryBank& b : banks) {
    keys.push_back(b.keys);
    values.push_back(b.values);
  }
  return MemoryBank{ag::concat0(keys), ag::concat0(values)};
}

SegGraph::SegGraph(const SegModel& model, bool trainable) : model_(&model) {
  if (model.params().size() != kParamCount) {
    throw std::invalid_argument("SegGraph: model has an unexpected parameter layout");
  }
  bound_.reserve(model.params().size());
  for (const Param& p : model.params()) {
    ag::Tensor t(p.shape, std::vector<double>(p.value.begin(), p.value.end()));
    bound_.push_back(trainable ? ag::Var::leaf(std::move(t)) : ag::Var::constant(std::move(t)));
  }
}

std::vector<std::vector<double>> SegGraph::param_grads() const {
  std::vector<std::vector<double>> out;
  out.reserve(bound_.size());
  for (const ag::Var& v : bound_) out.push_back(v.grad().data);
  return out;
}

QueryFeatures SegGraph::encode_query(const Frame& query) const {
  using namespace ag;
  Var x = pad_replicate(Var::constant(frame_tensor(query)), pad_amount(query.height),
                        pad_amount(query.width));
  Var f1 = relu(conv2d(x, p(kQ1W), p(kQ1B), 2, 1));
  Var f2 = relu(conv2d(f1, p(kQ2W), p(kQ2B), 2, 1));
  Var f3 = relu(conv2d(f2, p(kQ3W), p(kQ3B), 1, 1));
  Var f4 = relu(conv2d(f3, p(kQ4W), p(kQ4B), 1, 1));
  const int fh = f4.shape()[1], fw = f4.shape()[2];
  const int kd = model_->hyper().key_dim;
  Var key = conv2d(f4, p(kQKeyW), p(kQKeyB), 1, 0);
  QueryFeatures q;
  q.key = transpose2d(reshape(key, {kd, fh * fw}));
  q.value = conv2d(f4, p(kQValW), p(kQValB), 1, 0);
  q.skip = f1;
  q.height = query.height;
  q.width = query.width;
  return q;
}

MemoryBank SegGraph::encode_entry(const Frame& frame, const ag::Var& mask,
                                  const QueryFeatures* frame_query) const {
  using namespace ag;
  if (mask.size() != static_cast<std::size_t>(frame.height) * frame.width) {
    throw std::invalid_argument("encode_entry: mask does not match frame resolution");
  }
  Var rgb = Var::constant(frame_tensor(frame));
  Var m = reshape(mask, {1, frame.height, frame.width});
  const std::array<Var, 2> parts{rgb, m};
  Var x = pad_replicate(concat0(parts), pad_amount(frame.height), pad_amount(frame.width));
  Var f1 = relu(conv2d(x, p(kM1W), p(kM1B), 2, 1));
  Var f2 = relu(conv2d(f1, p(kM2W), p(kM2B), 2, 1));
  Var f3 = relu(conv2d(f2, p(kM3W), p(kM3B), 1, 1));
  Var f4 = relu(conv2d(f3, p(kM4W), p(kM4B), 1, 1));
  const int hw = f4.shape()[1] * f4.shape()[2];
  const SegHyper& h = model_->hyper();
  Var proj = reshape(conv2d(f4, p(kMValW), p(kMValB), 1, 0), {h.value_dim, hw});
  // The block-averaged mask rides along as one extra value channel.
  const int s = SegHyper::kStride;
  Var pooled = conv2d(pad_replicate(m, pad_amount(frame.height), pad_amount(frame.width)),
                      Var::constant(Tensor({1, 1, s, s}, 1.0 / (s * s))),
                      Var::constant(Tensor({1}, 0.0)), s, 0);
  const std::array<Var, 2> channels{proj, reshape(pooled, {1, hw})};
  Var val = concat0(channels);
  // Keys come from the query encoder so memory and query live in one space.
  Var key = frame_query ? frame_query->key : encode_query(frame).key;
  return MemoryBank{key, transpose2d(val)};
}

ag::Var SegGraph::decode(const QueryFeatures& q, const MemoryBank& memory) const {
  using namespace ag;
  const SegHyper& h = model_->hyper();
  if (memory.rows() == 0) throw std::invalid_argument("decode: empty memory");
  const int fh = q.value.shape()[1], fw = q.value.shape()[2];

  Var affinity = scale(matmul(normalize_rows(q.key), normalize_rows(memory.keys), false, true),
                       kAffinitySharpness);
  Var weights = softmax_rows(affinity);
  Var read = matmul(weights, memory.values, false, false);  // hw x (value_dim + 1)
  read = reshape(transpose2d(read), {h.value_dim + 1, fh, fw});

  const std::array<Var, 2> top{read, q.value};
  Var d1 = relu(conv_transpose2d(concat0(top), p(kD1W), p(kD1B), 2, 1));
  const std::array<Var, 2> mid{d1, q.skip};
  Var d2 = relu(conv_transpose2d(concat0(mid), p(kD2W), p(kD2B), 2, 1));
  Var logit = conv2d(d2, p(kHeadW), p(kHeadB), 1, 1);
  // The attended mask also reaches the logit directly, upsampled by
  // replication, so propagation does not hinge on the decoder alone.
  const int s = SegHyper::kStride;
  Var coarse = slice0(read, h.value_dim, 1);
  Var up = conv_transpose2d(coarse, Var::constant(Tensor({1, 1, s, s}, 1.0)), Var::constant(Tensor({1}, 0.0)), s, 0);
  logit = add(logit, conv2d(up, p(kPriorW), p(kPriorB), 1, 0));
  return sigmoid(crop(logit, q.height, q.width));
}

ag::Var mask_constant(const Mask& m) {
  return ag::Var::constant(ag::Tensor({m.height, m.width}, m.values));
}

ag::Var mask_leaf(const Mask& m) {
  return ag::Var::leaf(ag::Tensor({m.height, m.width}, m.values));
}

Mask to_mask(const ag::Var& prob, int h, int w, int object_id, MaskKind kind) {
  return Mask(h, w, prob.value().data, object_id, kind);
}

MemoryBank encode_memory(const SegGraph& graph, const ReferenceSet& refs,
                         std::vector<ag::Var>* mask_leaves) {
  refs.validate();
  std::vector<MemoryBank> banks;
  banks.reserve(refs.size());
  for (const auto& [frame, mask] : refs.entries) {
    ag::Var m = mask_leaves ? mask_leaf(mask) : mask_constant(mask);
    if (mask_leaves) mask_leaves->push_back(m);
    banks.push_back(graph.encode_entry(frame, m));
  }
  return concat_memory(banks);
}

MemoryBank encode_memory(const SegModel& model, const ReferenceSet& refs) {
  SegGraph graph(model, false);
  return encode_memory(graph, refs);
}

namespace {
void check_query(const ReferenceSet& refs, const Frame& query) {
  refs.validate();
  const Frame& r = refs.entries.front().first;
  if (r.height != query.height || r.width != query.width) {
    throw std::invalid_argument("segment: query resolution differs from references");
  }
}
}  // namespace

Mask segment(const SegModel& model, const ReferenceSet& refs, const Frame& query) {
  check_query(refs, query);
  SegGraph graph(model, false);
  MemoryBank memory = encode_memory(graph, refs);
  ag::Var prob = graph.decode(graph.encode_query(query), memory);
  return to_mask(prob, query.height, query.width, refs.entries.front().second.object_id);
}

MultiObjectMask segment_multi(const SegModel& model,
                              const std::map<int, ReferenceSet>& refs_per_object,
                              const Frame& query) {
  if (refs_per_object.empty()) throw std::invalid_argument("segment_multi: no objects");
  SegGraph graph(model, false);
  QueryFeatures q = graph.encode_query(query);
  std::vector<Mask> probs;
  for (const auto& [id, refs] : refs_per_object) {
    check_query(refs, query);
    ag::Var prob = graph.decode(q, encode_memory(graph, refs));
    probs.push_back(to_mask(prob, query.height, query.width, id));
  }
  return soft_aggregate(probs);
}

SegmentTrace segment_traced(const SegModel& model, const ReferenceSet& refs, const Frame& query) {
  check_query(refs, query);
  SegGraph graph(model, false);
  SegmentTrace trace;
  MemoryBank memory = encode_memory(graph, refs, &trace.ref_masks);
  trace.prob = graph.decode(graph.encode_query(query), memory);
  trace.height = query.height;
  trace.width = query.width;
  return trace;
}

std::vector<Mask> backward_to_mask(const SegmentTrace& trace, const ag::Var& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward_to_mask: loss must be scalar");
  ag::backward(loss);
  std::vector<Mask> grads;
  for (std::size_t i = 0; i < trace.ref_masks.size(); ++i) {
    const ag::Var& leaf = trace.ref_masks[i];
    const int h = leaf.shape()[0], w = leaf.shape()[1];
    Mask g(h, w, leaf.grad().data, 1, MaskKind::unconstrained);
    for (std::size_t j = 0; j < g.values.size(); ++j) {
      if (!std::isfinite(g.values[j])) {
        std::ostringstream msg;
        msg << "backward_to_mask: non-finite gradient for reference " << i << " at pixel ("
            << j / static_cast<std::size_t>(w) << "," << j % static_cast<std::size_t>(w)
            << "), loss=" << loss.value().data[0];
        throw NumericError(msg.str());
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace cvos
