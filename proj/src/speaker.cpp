#include "pragnav/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool valid_prob(double p) { return p >= 0.0 && p <= 1.0; }

void normalize_row(const double* counts, std::size_t n, double alpha, std::vector<double>& out) {
  out.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += counts[i] + alpha;
  if (!(total > 0.0)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n));
    return;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = (counts[i] + alpha) / total;
}

// Mixes each word with its confusable partner: w' = (1-v) w + v * prev(w).
void confuse(std::vector<double>& p, double v) {
  if (v == 0.0 || p.size() < 2) return;
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = (1.0 - v) * p[i] + v * p[(i + p.size() - 1) % p.size()];
  }
  p.swap(q);
}

// Lexicographic order on the sequences with END appended to each.
bool sequence_before(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  if (a.size() == b.size()) return false;
  // The shorter one continues with END, which sorts after every token.
  return a.size() > b.size();
}

}  // namespace

bool ranks_before(double score_a, const Instruction& a, double score_b, const Instruction& b) {
  if (score_a != score_b) return score_a > score_b;
  return sequence_before(a.tokens, b.tokens);
}

std::vector<StepFeature> step_features(const Vocabulary& vocab, const Trajectory& e) {
  const auto heads = headings(e);
  std::vector<StepFeature> out;
  for (std::size_t j = 0; j + 1 < e.steps.size(); ++j) {
    const auto& a = e.steps[j].action;
    if (!a || a->is_stop()) fail(ErrorCode::kInvalidArgument, "step_features: malformed trajectory");
    StepFeature f;
    f.relative_sector = relative_sector(a->sector, heads[j]);
    // The destination's landmarks as seen from the current node.
    for (const auto& view : e.steps[j].observation.visible) {
      if (view.sector != a->sector) continue;
      for (const auto& name : view.landmarks) {
        auto id = vocab.find(name);
        if (id && vocab.token_class(*id) == TokenClass::kLandmark) f.landmarks.push_back(*id);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

SpeakerModel::SpeakerModel(Vocabulary vocab, SpeakerConfig config)
    : SpeakerModel(std::move(vocab), config, SpeakerParameters{}) {}

SpeakerModel::SpeakerModel(Vocabulary vocab, SpeakerConfig config, SpeakerParameters params)
    : vocab_(std::move(vocab)), config_(config), params_(std::move(params)) {
  if (!(config_.smoothing >= 0.0) || !std::isfinite(config_.smoothing)) {
    fail(ErrorCode::kInvalidArgument, "speaker: smoothing must be non-negative");
  }
  if (!valid_prob(config_.drop_clause_prob) || !valid_prob(config_.vocab_confusion_prob)) {
    fail(ErrorCode::kInvalidArgument, "speaker: knobs must lie in [0,1]");
  }
  if (config_.max_length < 1) fail(ErrorCode::kInvalidArgument, "speaker: max_length must be positive");
  if (vocab_.size() == 0) fail(ErrorCode::kInvalidArgument, "speaker: empty vocabulary");

  function_count_ = static_cast<std::uint32_t>(vocab_.members(TokenClass::kFunction).size());
  symbol_count_ = function_count_ + 4;
  token_symbol_.resize(vocab_.size());
  for (TokenId t = 0; t < vocab_.size(); ++t) {
    switch (vocab_.token_class(t)) {
      case TokenClass::kFunction: token_symbol_[t] = static_cast<std::uint32_t>(vocab_.class_index(t)); break;
      case TokenClass::kSeparator: token_symbol_[t] = function_count_; break;
      case TokenClass::kDirection: token_symbol_[t] = function_count_ + 1; break;
      case TokenClass::kLandmark: token_symbol_[t] = function_count_ + 2; break;
    }
  }

  const std::size_t dirs = vocab_.members(TokenClass::kDirection).size();
  const std::size_t lms = vocab_.members(TokenClass::kLandmark).size();
  if (params_.direction.empty()) params_.direction.assign(kSectorCount * dirs, 0.0);
  if (params_.landmark.empty()) params_.landmark.assign(lms * lms, 0.0);
  auto check = [](const std::vector<double>& v) {
    for (double c : v) {
      if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorCode::kInvalidArgument, "speaker: invalid count");
    }
  };
  if (params_.direction.size() != kSectorCount * dirs || params_.landmark.size() != lms * lms) {
    fail(ErrorCode::kInvalidArgument, "speaker: parameter table size mismatch");
  }
  check(params_.direction);
  check(params_.landmark);
  const std::uint32_t max_key = (symbol_count_ + 1) * (symbol_count_ + 1) * 2;
  for (const auto& [key, row] : params_.skeleton) {
    if (key >= max_key || row.size() != symbol_count_) {
      fail(ErrorCode::kInvalidArgument, "speaker: malformed skeleton table");
    }
    check(row);
  }
}

SpeakerModel SpeakerModel::with_knobs(double drop_clause_prob, double vocab_confusion_prob) const {
  SpeakerConfig c = config_;
  c.drop_clause_prob = drop_clause_prob;
  c.vocab_confusion_prob = vocab_confusion_prob;
  return SpeakerModel(vocab_, c, params_);
}

SpeakerModel::State SpeakerModel::initial_state() const {
  // head = "no clause started", prev = "beginning of instruction".
  return State{0, 0, symbol_count_, symbol_count_};
}

SpeakerModel::State SpeakerModel::advance(const State& state, TokenId token) const {
  if (token >= vocab_.size()) fail(ErrorCode::kInvalidArgument, "speaker: out-of-vocabulary token");
  State next = state;
  const std::uint32_t sym = symbol_of(token);
  ++next.length;
  next.prev = sym;
  if (vocab_.token_class(token) == TokenClass::kSeparator) {
    ++next.cursor;
    next.head = symbol_count_;
  } else if (state.head == symbol_count_) {
    next.head = sym;
  }
  return next;
}

std::uint32_t SpeakerModel::context_key(const State& state, bool last) const {
  return (state.head * (symbol_count_ + 1) + state.prev) * 2 + (last ? 1u : 0u);
}

void SpeakerModel::skeleton_probs(std::uint32_t key, bool allow_end, std::vector<double>& out) const {
  const std::uint32_t end = symbol_count_ - 1;
  std::vector<bool> allowed(symbol_count_, true);
  allowed[end] = allow_end;
  if (vocab_.members(TokenClass::kSeparator).empty()) allowed[function_count_] = false;
  if (vocab_.members(TokenClass::kDirection).empty()) allowed[function_count_ + 1] = false;
  if (vocab_.members(TokenClass::kLandmark).empty()) allowed[function_count_ + 2] = false;

  out.assign(symbol_count_, 0.0);
  const auto it = params_.skeleton.find(key);
  const double alpha = config_.smoothing;
  double total = 0.0;
  std::size_t n_allowed = 0;
  for (std::uint32_t s = 0; s < symbol_count_; ++s) {
    if (!allowed[s]) continue;
    ++n_allowed;
    out[s] = (it == params_.skeleton.end() ? 0.0 : it->second[s]) + alpha;
    total += out[s];
  }
  if (!(total > 0.0)) {
    for (std::uint32_t s = 0; s < symbol_count_; ++s) out[s] = allowed[s] ? 1.0 / static_cast<double>(n_allowed) : 0.0;
    return;
  }
  for (double& p : out) p /= total;
}

void SpeakerModel::next_token_probs(std::span<const StepFeature> steps, const State& state,
                                    std::vector<double>& out) const {
  const std::size_t v = vocab_.size();
  out.assign(v + 1, 0.0);
  if (state.length >= config_.max_length) {
    out[v] = 1.0;
    return;
  }
  const std::size_t n = steps.size();
  const bool last = state.cursor + 1 >= n;
  std::vector<double> skel;
  skeleton_probs(context_key(state, last), state.length > 0, skel);

  const std::uint32_t sep = function_count_, dir = function_count_ + 1, lm = function_count_ + 2,
                      end = function_count_ + 3;
  const double d = config_.drop_clause_prob;
  if (!last && d > 0.0 && state.length > 0) {
    skel[end] += d * skel[sep];
    skel[sep] *= (1.0 - d);
  }

  const double alpha = config_.smoothing;
  const double conf = config_.vocab_confusion_prob;
  const auto& dir_words = vocab_.members(TokenClass::kDirection);
  const auto& lm_words = vocab_.members(TokenClass::kLandmark);
  const auto& sep_words = vocab_.members(TokenClass::kSeparator);
  const bool grounded = state.cursor < n;

  std::vector<double> dir_fill;
  if (!dir_words.empty()) {
    if (grounded) {
      const auto r = static_cast<std::size_t>(steps[state.cursor].relative_sector);
      normalize_row(params_.direction.data() + r * dir_words.size(), dir_words.size(), alpha, dir_fill);
    } else {
      dir_fill.assign(dir_words.size(), 1.0 / static_cast<double>(dir_words.size()));
    }
    confuse(dir_fill, conf);
  }

  std::vector<double> lm_fill;
  if (!lm_words.empty()) {
    const std::size_t m = lm_words.size();
    lm_fill.assign(m, 0.0);
    std::size_t sources = 0;
    if (grounded) {
      std::vector<double> row;
      for (TokenId l : steps[state.cursor].landmarks) {
        if (l >= vocab_.size() || vocab_.token_class(l) != TokenClass::kLandmark) continue;
        normalize_row(params_.landmark.data() + vocab_.class_index(l) * m, m, alpha, row);
        for (std::size_t i = 0; i < m; ++i) lm_fill[i] += row[i];
        ++sources;
      }
    }
    if (sources == 0) {
      std::fill(lm_fill.begin(), lm_fill.end(), 1.0 / static_cast<double>(m));
    } else {
      for (double& p : lm_fill) p /= static_cast<double>(sources);
    }
    confuse(lm_fill, conf);
  }

  for (TokenId t = 0; t < v; ++t) {
    const std::uint32_t s = symbol_of(t);
    const std::size_t ci = vocab_.class_index(t);
    if (s < function_count_) {
      out[t] = skel[s];
    } else if (s == sep) {
      out[t] = skel[s] / static_cast<double>(sep_words.size());
    } else if (s == dir) {
      out[t] = skel[s] * dir_fill[ci];
    } else if (s == lm) {
      out[t] = skel[s] * lm_fill[ci];
    }
  }
  out[v] = skel[end];
}

double SpeakerModel::score(std::span<const StepFeature> steps, const Instruction& u) const {
  for (TokenId t : u.tokens) {
    if (t >= vocab_.size()) fail(ErrorCode::kInvalidArgument, "speaker_score: out-of-vocabulary token");
  }
  if (u.tokens.empty() || u.tokens.size() > config_.max_length) return kNegInf;
  State st = initial_state();
  std::vector<double> probs;
  double logp = 0.0;
  for (TokenId t : u.tokens) {
    next_token_probs(steps, st, probs);
    if (!(probs[t] > 0.0)) return kNegInf;
    logp += std::log(probs[t]);
    st = advance(st, t);
  }
  if (st.length < config_.max_length) {
    next_token_probs(steps, st, probs);
    if (!(probs[end_index()] > 0.0)) return kNegInf;
    logp += std::log(probs[end_index()]);
  }
  return logp;
}

Instruction SpeakerModel::sample(std::span<const StepFeature> steps, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x73616d70ULL));
  State st = initial_state();
  std::vector<double> probs;
  Instruction u;
  while (st.length < config_.max_length) {
    next_token_probs(steps, st, probs);
    const std::size_t pick = sample_discrete(rng, probs);
    if (pick == end_index()) break;
    u.tokens.push_back(static_cast<TokenId>(pick));
    st = advance(st, static_cast<TokenId>(pick));
  }
  return u;
}

Instruction SpeakerModel::greedy(std::span<const StepFeature> steps) const {
  State st = initial_state();
  std::vector<double> probs;
  Instruction u;
  while (st.length < config_.max_length) {
    next_token_probs(steps, st, probs);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    if (best == end_index()) break;
    u.tokens.push_back(static_cast<TokenId>(best));
    st = advance(st, static_cast<TokenId>(best));
  }
  return u;
}

std::pair<double, Instruction> SpeakerModel::beam(std::span<const StepFeature> steps, std::size_t width,
                                                  bool& exhaustive) const {
  struct Hyp {
    std::vector<TokenId> tokens;  // for finished ones, terminated by the END id
    State state;
    double score = 0.0;
    bool finished = false;
  };
  exhaustive = true;
  std::vector<Hyp> alive{Hyp{{}, initial_state(), 0.0, false}};
  bool have_best = false;
  double best_score = kNegInf;
  Instruction best;
  auto offer = [&](double s, std::vector<TokenId> tokens) {
    Instruction u{std::move(tokens)};
    if (!have_best || ranks_before(s, u, best_score, best)) {
      have_best = true;
      best_score = s;
      best = std::move(u);
    }
  };

  std::vector<double> probs;
  while (!alive.empty()) {
    std::vector<Hyp> next;
    for (auto& h : alive) {
      if (h.state.length >= config_.max_length) {
        offer(h.score, h.tokens);
        continue;
      }
      next_token_probs(steps, h.state, probs);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0)) continue;
        Hyp c;
        c.tokens = h.tokens;
        c.tokens.push_back(static_cast<TokenId>(i));
        c.score = h.score + std::log(probs[i]);
        c.finished = i == end_index();
        if (!c.finished) c.state = advance(h.state, static_cast<TokenId>(i));
        next.push_back(std::move(c));
      }
    }
    // Every candidate here has the same length, so plain lexicographic order on
    // the extended sequence puts END after every token.
    std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    if (next.size() > width) {
      next.resize(width);
      exhaustive = false;
    }
    alive.clear();
    for (auto& c : next) {
      if (c.finished) {
        c.tokens.pop_back();
        offer(c.score, std::move(c.tokens));
      } else if (!have_best || c.score >= best_score) {
        alive.push_back(std::move(c));
      }
    }
  }
  if (!have_best) fail(ErrorCode::kInvalidState, "speaker: no instruction with positive probability");
  return {best_score, best};
}

Instruction SpeakerModel::infer(std::span<const StepFeature> steps, DecodeStrategy strategy) const {
  if (strategy.kind == DecodeStrategy::Kind::kGreedy) return greedy(steps);
  if (strategy.width == 0) fail(ErrorCode::kInvalidArgument, "speaker: beam width must be positive");
  // Best result over all widths up to `width`, so quality never drops as the
  // width grows. Stops early once a pass prunes nothing.
  double best_score = kNegInf;
  Instruction best;
  bool have = false;
  for (std::size_t w = 1; w <= strategy.width; ++w) {
    bool exhaustive = false;
    auto [s, u] = beam(steps, w, exhaustive);
    if (!have || ranks_before(s, u, best_score, best)) {
      have = true;
      best_score = s;
      best = std::move(u);
    }
    if (exhaustive) break;
  }
  return best;
}

SpeakerModel train_speaker(const Vocabulary& vocab, std::span<const SpeakerExample> corpus,
                           const SpeakerConfig& config) {
  if (corpus.empty()) fail(ErrorCode::kInvalidArgument, "train_speaker: empty corpus");
  SpeakerModel model(vocab, config);
  auto& params = model.params_;
  const std::size_t dirs = vocab.members(TokenClass::kDirection).size();
  const std::size_t lms = vocab.members(TokenClass::kLandmark).size();
  for (const auto& ex : corpus) {
    if (ex.instruction.tokens.empty() || ex.instruction.tokens.size() > config.max_length) {
      fail(ErrorCode::kInvalidArgument, "train_speaker: instruction length out of range");
    }
    SpeakerModel::State st = model.initial_state();
    const std::size_t n = ex.steps.size();
    auto count = [&](std::uint32_t sym) {
      auto& row = params.skeleton[model.context_key(st, st.cursor + 1 >= n)];
      if (row.empty()) row.assign(model.symbol_count_, 0.0);
      row[sym] += 1.0;
    };
    for (TokenId t : ex.instruction.tokens) {
      if (t >= vocab.size()) fail(ErrorCode::kInvalidArgument, "train_speaker: out-of-vocabulary token");
      count(model.symbol_of(t));
      if (st.cursor < n) {
        const auto& f = ex.steps[st.cursor];
        if (vocab.token_class(t) == TokenClass::kDirection) {
          params.direction[static_cast<std::size_t>(f.relative_sector) * dirs + vocab.class_index(t)] += 1.0;
        } else if (vocab.token_class(t) == TokenClass::kLandmark) {
          std::vector<TokenId> seen;
          for (TokenId l : f.landmarks) {
            if (l < vocab.size() && vocab.token_class(l) == TokenClass::kLandmark) seen.push_back(l);
          }
          for (TokenId l : seen) {
            params.landmark[vocab.class_index(l) * lms + vocab.class_index(t)] += 1.0 / static_cast<double>(seen.size());
          }
        }
      }
      st = model.advance(st, t);
    }
    if (st.length < config.max_length) count(model.symbol_count_ - 1);
  }
  return model;
}

}  // namespace pragnav
