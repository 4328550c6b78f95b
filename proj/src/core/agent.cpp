#include "agent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "error.hpp"

namespace kgfe {

QNetwork::QNetwork(std::vector<int> dims, uint64_t seed) : dims_(std::move(dims)) {
  if (dims_.size() < 2 || std::any_of(dims_.begin(), dims_.end(), [](int d) { return d <= 0; }))
    throw Error(ErrorCode::invalid_argument, "network dims must be positive with at least 2 layers");
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < dims_.size(); ++l) {
    int in = dims_[l], out = dims_[l + 1];
    double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd W(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W(i, j) = u(rng);
    W_.push_back(std::move(W));
    b_.push_back(Eigen::VectorXd::Zero(out));
  }
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd &S) const {
  Eigen::MatrixXd h = S;
  for (size_t l = 0; l < W_.size(); ++l) {
    Eigen::MatrixXd z = (W_[l] * h).colwise() + b_[l];
    h = l + 1 < W_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd &s) const { return forward_batch(s).col(0); }

std::pair<double, Eigen::VectorXd> QNetwork::loss_and_gradient(const Eigen::MatrixXd &S,
                                                               std::span<const size_t> actions,
                                                               std::span<const double> targets) const {
  const auto n = S.cols();
  std::vector<Eigen::MatrixXd> acts{S}, pre;
  for (size_t l = 0; l < W_.size(); ++l) {
    Eigen::MatrixXd z = (W_[l] * acts.back()).colwise() + b_[l];
    pre.push_back(z);
    acts.push_back(l + 1 < W_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(acts.back().rows(), n);
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto a = static_cast<Eigen::Index>(actions[static_cast<size_t>(i)]);
    double err = acts.back()(a, i) - targets[static_cast<size_t>(i)];
    loss += err * err;
    delta(a, i) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);

  std::vector<Eigen::MatrixXd> gW(W_.size());
  std::vector<Eigen::VectorXd> gb(W_.size());
  for (size_t l = W_.size(); l-- > 0;) {
    gW[l] = delta * acts[l].transpose();
    gb[l] = delta.rowwise().sum();
    if (l > 0) delta = (W_[l].transpose() * delta).cwiseProduct((pre[l - 1].array() > 0).cast<double>().matrix());
  }
  Eigen::VectorXd g(param_count());
  Eigen::Index k = 0;
  for (size_t l = 0; l < W_.size(); ++l) {
    for (Eigen::Index i = 0; i < gW[l].rows(); ++i)
      for (Eigen::Index j = 0; j < gW[l].cols(); ++j) g(k++) = gW[l](i, j);
    for (Eigen::Index i = 0; i < gb[l].size(); ++i) g(k++) = gb[l](i);
  }
  return {loss, g};
}

Eigen::Index QNetwork::param_count() const {
  Eigen::Index n = 0;
  for (size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
  return n;
}

Eigen::VectorXd QNetwork::params() const {
  Eigen::VectorXd p(param_count());
  Eigen::Index k = 0;
  for (size_t l = 0; l < W_.size(); ++l) {
    for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
      for (Eigen::Index j = 0; j < W_[l].cols(); ++j) p(k++) = W_[l](i, j);
    for (Eigen::Index i = 0; i < b_[l].size(); ++i) p(k++) = b_[l](i);
  }
  return p;
}

void QNetwork::set_params(const Eigen::VectorXd &p) {
  if (p.size() != param_count()) throw Error(ErrorCode::invalid_argument, "parameter count mismatch");
  Eigen::Index k = 0;
  for (size_t l = 0; l < W_.size(); ++l) {
    for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
      for (Eigen::Index j = 0; j < W_[l].cols(); ++j) W_[l](i, j) = p(k++);
    for (Eigen::Index i = 0; i < b_[l].size(); ++i) b_[l](i) = p(k++);
  }
}

bool QNetwork::finite() const {
  for (size_t l = 0; l < W_.size(); ++l)
    if (!W_[l].allFinite() || !b_[l].allFinite()) return false;
  return true;
}

namespace {

void put_u32(std::string &out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string &out, double d) {
  auto v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::string_view bytes;
  size_t pos = 0;
  uint64_t take(int width) {
    if (pos + static_cast<size_t>(width) > bytes.size())
      throw Error(ErrorCode::io_error, "checkpoint truncated");
    uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return v;
  }
};

} // namespace

std::string QNetwork::serialize() const {
  std::string out = "SMFE";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(dims_.size()));
  for (int d : dims_) put_u32(out, static_cast<uint32_t>(d));
  auto p = params();
  for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(out, p(i));
  return out;
}

QNetwork QNetwork::deserialize(std::string_view bytes) {
  if (bytes.substr(0, 4) != "SMFE") throw Error(ErrorCode::io_error, "not a weight checkpoint");
  Reader r{bytes, 4};
  auto version = r.take(4);
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::io_error, "unsupported checkpoint version " + std::to_string(version));
  auto layers = r.take(4);
  if (layers < 2 || layers > 64) throw Error(ErrorCode::io_error, "bad checkpoint layer count");
  std::vector<int> dims;
  for (uint64_t i = 0; i < layers; ++i) {
    auto d = r.take(4);
    if (d == 0 || d > (1u << 20)) throw Error(ErrorCode::io_error, "bad checkpoint layer width");
    dims.push_back(static_cast<int>(d));
  }
  QNetwork q(dims, 0);
  Eigen::VectorXd p(q.param_count());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::bit_cast<double>(r.take(8));
  if (r.pos != bytes.size()) throw Error(ErrorCode::io_error, "trailing bytes in checkpoint");
  q.set_params(p);
  return q;
}

void QNetwork::save(const std::string &path) const {
  std::ofstream f(path, std::ios::binary);
  auto bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path);
}

QNetwork QNetwork::load(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void Adam::step(Eigen::VectorXd &params, const Eigen::VectorXd &grad) {
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1 - beta1_) * grad;
  v_ = beta2_ * v_ + (1 - beta2_) * grad.cwiseProduct(grad);
  double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

ReplayBuffer::ReplayBuffer(size_t capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity == 0) throw Error(ErrorCode::invalid_argument, "replay capacity must be positive");
  ring_.reserve(std::min<size_t>(capacity, 4096));
}

void ReplayBuffer::push(Transition t) {
  if (!std::isfinite(t.r)) throw Error(ErrorCode::invalid_argument, "transition reward not finite");
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
    return;
  }
  ring_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition &ReplayBuffer::at(size_t i) const { return ring_.at((head_ + i) % ring_.size()); }

std::vector<const Transition *> ReplayBuffer::sample(size_t n) {
  if (ring_.empty()) throw Error(ErrorCode::invalid_argument, "sampling an empty replay buffer");
  std::uniform_int_distribution<size_t> u(0, ring_.size() - 1);
  std::vector<const Transition *> out;
  for (size_t i = 0; i < n; ++i) out.push_back(&ring_[u(rng_)]);
  return out;
}

double EpsilonSchedule::at(size_t episode) const {
  return std::max(eps_min, eps0 * std::pow(decay, static_cast<double>(episode)));
}

size_t greedy_action(const Eigen::VectorXd &q, std::span<const uint8_t> mask) {
  std::optional<size_t> best;
  for (size_t a = 0; a < static_cast<size_t>(q.size()); ++a) {
    if (!mask.empty() && !mask[a]) continue;
    if (!best || q(static_cast<Eigen::Index>(a)) > q(static_cast<Eigen::Index>(*best))) best = a;
  }
  if (!best) throw Error(ErrorCode::invalid_argument, "no valid action");
  return *best;
}

size_t select_action(const QNetwork &q, const Eigen::VectorXd &s, double epsilon,
                     std::span<const uint8_t> mask, std::mt19937_64 &rng) {
  std::vector<size_t> valid;
  for (size_t a = 0; a < static_cast<size_t>(q.output_dim()); ++a)
    if (mask.empty() || mask[a]) valid.push_back(a);
  if (valid.empty()) throw Error(ErrorCode::invalid_argument, "no valid action");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<size_t> pick(0, valid.size() - 1);
    return valid[pick(rng)];
  }
  return greedy_action(q.forward(s), mask);
}

double td_update(QNetwork &q, const QNetwork &target, std::span<const Transition *const> batch,
                 double gamma, Adam &opt) {
  if (batch.empty()) throw Error(ErrorCode::invalid_argument, "empty training batch");
  auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd S(q.input_dim(), n), S2(q.input_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S.col(i) = batch[static_cast<size_t>(i)]->s;
    S2.col(i) = batch[static_cast<size_t>(i)]->s2;
  }
  Eigen::MatrixXd next = target.forward_batch(S2);
  std::vector<size_t> actions;
  std::vector<double> y;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition &t = *batch[static_cast<size_t>(i)];
    double bootstrap = 0.0;
    if (!t.terminal) {
      bool any = false;
      for (Eigen::Index a = 0; a < next.rows(); ++a) {
        if (!t.next_mask.empty() && !t.next_mask[static_cast<size_t>(a)]) continue;
        bootstrap = any ? std::max(bootstrap, next(a, i)) : next(a, i);
        any = true;
      }
    }
    actions.push_back(t.a);
    y.push_back(t.r + gamma * bootstrap);
  }
  auto [loss, grad] = q.loss_and_gradient(S, actions, y);
  if (!std::isfinite(loss) || !grad.allFinite())
    throw Error(ErrorCode::divergence, "Q-learning diverged: non-finite loss " + std::to_string(loss));
  Eigen::VectorXd p = q.params();
  opt.step(p, grad);
  if (!p.allFinite()) throw Error(ErrorCode::divergence, "Q-network weights became non-finite");
  q.set_params(p);
  return loss;
}

void sync_target(const QNetwork &q, QNetwork &target) { target = q; }

StateLayout state_layout(const KnowledgeBase &kb) {
  StateLayout l;
  l.concepts = kb.concepts;
  if (!kb.has_concept(kUnknownConcept)) l.concepts.push_back(kUnknownConcept);
  l.dimension_groups = kb.dimension_groups();
  return l;
}

Eigen::VectorXd vectorize(const Dataset &d, const KnowledgeBase &kb, const StateLayout &layout,
                          const StepContext &ctx) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  auto slot = [](const std::vector<std::string> &names, const std::string &key) {
    return static_cast<Eigen::Index>(std::find(names.begin(), names.end(), key) - names.begin());
  };
  auto nc = static_cast<Eigen::Index>(layout.concepts.size());
  auto ng = static_cast<Eigen::Index>(layout.dimension_groups.size());
  auto features = d.features();
  for (auto *c : features) {
    std::string concept_id = c->concept_name.empty() ? kUnknownConcept : c->concept_name;
    auto ci = slot(layout.concepts, concept_id);
    if (ci == nc) ci = slot(layout.concepts, kUnknownConcept);
    v(ci) += 1.0;
    auto gi = slot(layout.dimension_groups, kb.dimension_of(c->unit));
    if (gi < ng) v(nc + gi) += 1.0;
  }
  Eigen::Index base = nc + ng;
  v(base) = static_cast<double>(features.size());
  v(base + 1) = static_cast<double>(ctx.step) / static_cast<double>(std::max<size_t>(ctx.m, 1));
  v(base + 2) = std::clamp(0.5 + 0.5 * ctx.last_reward, 0.0, 1.0);
  v(base + 3) = ctx.mean_interpretability;
  return v;
}

DqnAgent::DqnAgent(int state_dim, int actions, const AgentParams &params, uint64_t seed)
    : params_(params), q_({state_dim, params.hidden1, params.hidden2, actions}, seed), target_(q_),
      opt_(params.lr), replay_(params.replay_capacity, seed ^ 0x9e3779b97f4a7c15ULL),
      rng_(seed + 1) {
  if (params.batch == 0 || params.sync_period == 0)
    throw Error(ErrorCode::invalid_argument, "batch and sync period must be positive");
  if (!(params.gamma >= 0 && params.gamma < 1))
    throw Error(ErrorCode::invalid_argument, "discount must lie in [0,1)");
}

size_t DqnAgent::act(const Eigen::VectorXd &s, double epsilon, std::span<const uint8_t> mask) {
  return select_action(q_, s, epsilon, mask, rng_);
}

std::optional<double> DqnAgent::observe(Transition t) {
  replay_.push(std::move(t));
  if (replay_.size() < params_.batch) return std::nullopt;
  auto batch = replay_.sample(params_.batch);
  double loss = td_update(q_, target_, batch, params_.gamma, opt_);
  if (++updates_ % params_.sync_period == 0) sync_target(q_, target_);
  return loss;
}

} // namespace kgfe
