#include "treegen/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "treegen/inference.hpp"

namespace treegen {

Tensor routed_prob(const RuleDistribution& dist, int index) {
  const int R = dist.num_rules();
  if (index < 0 || index >= static_cast<int>(dist.mask.size()))
    throw TrainError("routed_prob: index out of range");
  if (index < R) return mul(dist.gate, select_item(dist.predefined, index));
  if (!dist.copy.defined()) throw TrainError("routed_prob: copy target with pointer disabled");
  Tensor one_minus = sub(Tensor::from({1}, {1.0}), dist.gate);
  return mul(one_minus, select_item(dist.copy, index - R));
}

Tensor nll_loss(const std::vector<RuleDistribution>& dists, const std::vector<int>& targets) {
  if (dists.size() != targets.size())
    throw TrainError("nll_loss: distribution/target length mismatch");
  if (dists.empty()) throw TrainError("nll_loss: empty step list");
  std::vector<Tensor> terms;
  for (size_t i = 0; i < dists.size(); ++i) {
    const int t = targets[i];
    if (t < 0 || t >= static_cast<int>(dists[i].mask.size()))
      throw TrainError("nll_loss: target out of range at step " + std::to_string(i));
    if (!dists[i].mask[static_cast<size_t>(t)])
      throw TrainError("nll_loss: target masked out at step " + std::to_string(i));
    terms.push_back(neg_log_floored(routed_prob(dists[i], t)));
  }
  return mean_all(stack_scalars(terms));
}

namespace {

std::vector<int> token_positions(const std::vector<std::string>& tokens,
                                 const std::string& tok) {
  std::vector<int> out;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == tok) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

Tensor example_loss(Model& model, const Grammar& grammar, const TrainExample& ex,
                    bool training, ExampleLossInfo* info) {
  const auto& applied = ex.applied;
  if (applied.size() < 2)
    throw TrainError("example " + ex.id + ": derivation has no predictable steps");
  NlEncoding nl = model.encode_nl(ex.nl, training);
  AstInputs ai = model.make_ast_inputs(ex.applied, ex.depths, ex.parent_links);
  Tensor ast = model.encode_ast(ai, nl, training);

  // replay the derivation to collect each step's query path and mask
  DerivationState st = grammar.initial_state();
  grammar.apply(st, applied[0]);
  std::vector<std::vector<int>> paths;
  std::vector<std::vector<bool>> masks;
  for (size_t q = 0; q + 1 < applied.size(); ++q) {
    paths.push_back(model.pad_path(grammar.query_path(st)));
    masks.push_back(grammar.valid_rule_mask(st, ex.nl.tokens));
    grammar.apply(st, applied[q + 1]);
  }

  Tensor queries = model.encode_queries(paths, training);
  Tensor h = model.decode(queries, ast, nl, /*causal=*/true, training);

  const bool pointer_on = !model.config().disable_pointer;
  const bool copy_pref = model.config().copy_preferred;
  std::vector<Tensor> terms;
  int skipped = 0;
  for (size_t q = 0; q + 1 < applied.size(); ++q) {
    const AppliedRule& gold = applied[q + 1];
    if (gold.is_copy() && !pointer_on) {
      ++skipped;
      continue;
    }
    RuleDistribution dist = model.predict(h, static_cast<int>(q), nl, masks[q]);
    Tensor p;
    if (gold.is_copy()) {
      auto pos = token_positions(ex.nl.tokens, gold.copy_token);
      if (pos.empty())
        throw TrainError("example " + ex.id + ": copy token '" + gold.copy_token +
                         "' absent from the description");
      if (!dist.has_copy)
        throw TrainError("example " + ex.id + ": copy target masked out at step " +
                         std::to_string(q));
      std::vector<std::int64_t> idx(pos.begin(), pos.end());
      p = mul(sub(Tensor::from({1}, {1.0}), dist.gate), sum_items(dist.copy, idx));
    } else {
      if (!masks[q][static_cast<size_t>(gold.rule_id)])
        throw TrainError("example " + ex.id + ": rule target masked out at step " +
                         std::to_string(q));
      // a unary-terminal rule whose token also appears in the description is
      // reachable through the pointer too; both routes' mass counts
      std::vector<int> copy_pos;
      const GrammarRule& r = grammar.rule(gold.rule_id);
      if (pointer_on && dist.has_copy && r.children.size() == 1 &&
          grammar.is_terminal(r.children[0]))
        copy_pos = token_positions(ex.nl.tokens, grammar.symbol_name(r.children[0]));
      Tensor pred_route = mul(dist.gate, select_item(dist.predefined, gold.rule_id));
      if (!copy_pos.empty()) {
        std::vector<std::int64_t> idx(copy_pos.begin(), copy_pos.end());
        Tensor copy_route =
            mul(sub(Tensor::from({1}, {1.0}), dist.gate), sum_items(dist.copy, idx));
        p = copy_pref ? copy_route : add(pred_route, copy_route);
      } else {
        p = pred_route;
      }
    }
    terms.push_back(neg_log_floored(p));
  }
  if (info) {
    info->steps = static_cast<int>(terms.size());
    info->skipped_copy_only = skipped;
  }
  if (terms.empty())
    throw TrainError("example " + ex.id + ": every step requires the disabled pointer");
  return mean_all(stack_scalars(terms));
}

// --- Adafactor ---

int Adafactor::step(ParamStore& params) {
  ++t_;
  const double rho = std::min(1e-2, 1.0 / std::sqrt(static_cast<double>(t_)));
  const double beta = 1.0 - std::pow(static_cast<double>(t_), -0.8);
  int skipped = 0;

  for (const auto& [name, p] : params.items()) {
    auto& val = p.raw()->value;
    auto& grad = p.raw()->ensure_grad();
    bool finite = true;
    for (double g : grad)
      if (!std::isfinite(g)) finite = false;
    if (!finite) {
      ++skipped;
      continue;
    }
    Moments& m = state_[name];
    const auto& shape = p.shape();
    const size_t n = val.size();

    std::vector<double> vhat(n);
    if (shape.size() == 2 && shape[0] > 1 && shape[1] > 1) {
      const size_t rows = static_cast<size_t>(shape[0]);
      const size_t cols = static_cast<size_t>(shape[1]);
      if (m.row.size() != rows) m.row.assign(rows, 0.0);
      if (m.col.size() != cols) m.col.assign(cols, 0.0);
      std::vector<double> rsum(rows, 0.0), csum(cols, 0.0);
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) {
          double g2 = grad[i * cols + j] * grad[i * cols + j] + eps1_;
          rsum[i] += g2;
          csum[j] += g2;
        }
      double total_r = 0.0;
      for (size_t i = 0; i < rows; ++i) {
        m.row[i] = beta * m.row[i] + (1.0 - beta) * rsum[i];
        total_r += m.row[i];
      }
      for (size_t j = 0; j < cols; ++j) m.col[j] = beta * m.col[j] + (1.0 - beta) * csum[j];
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
          vhat[i * cols + j] = m.row[i] * m.col[j] / total_r;
    } else {
      if (m.full.size() != n) m.full.assign(n, 0.0);
      for (size_t i = 0; i < n; ++i) {
        m.full[i] = beta * m.full[i] + (1.0 - beta) * (grad[i] * grad[i] + eps1_);
        vhat[i] = m.full[i];
      }
    }

    double u_ms = 0.0, x_ms = 0.0;
    std::vector<double> u(n);
    for (size_t i = 0; i < n; ++i) {
      u[i] = grad[i] / std::sqrt(vhat[i]);
      u_ms += u[i] * u[i];
      x_ms += val[i] * val[i];
    }
    const double u_rms = std::sqrt(u_ms / static_cast<double>(n));
    const double x_rms = std::sqrt(x_ms / static_cast<double>(n));
    const double denom = std::max(1.0, u_rms / clip_);
    const double alpha = std::max(eps2_, x_rms) * rho;
    for (size_t i = 0; i < n; ++i) val[i] -= alpha * u[i] / denom;
  }
  return skipped;
}

// --- checkpoints ---

namespace {

constexpr char kMagic[4] = {'T', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n)))
    throw CheckpointError("truncated checkpoint string");
  return s;
}

float to_le_f32(double d) {
  float f = static_cast<float>(d);
  return f;  // build targets are little-endian
}

}  // namespace

void save_checkpoint(const std::string& path, const ConfigBundle& cfg,
                     const ParamStore& params) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint: " + tmp);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_str(os, cfg.to_text());
    auto items = params.items();
    put_u32(os, static_cast<std::uint32_t>(items.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : items) {
      put_str(os, name);
      put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
      for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
      put_u64(os, offset);
      offset += 8 + 4 * static_cast<std::uint64_t>(t.size());
    }
    for (const auto& [name, t] : items) {
      put_u64(os, static_cast<std::uint64_t>(t.size()));
      for (double d : t.value()) {
        float f = to_le_f32(d);
        os.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
    if (!os) throw CheckpointError("write failure on " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot finalize checkpoint " + path + ": " + ec.message());
}

namespace {

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset;
};

std::pair<ConfigBundle, std::vector<ManifestEntry>> read_header(std::istream& is,
                                                                const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  ConfigBundle cfg = ConfigBundle::from_text(get_str(is));
  std::uint32_t count = get_u32(is);
  std::vector<ManifestEntry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    ManifestEntry e;
    e.name = get_str(is);
    std::uint32_t nd = get_u32(is);
    for (std::uint32_t k = 0; k < nd; ++k) e.shape.push_back(static_cast<int>(get_u32(is)));
    e.offset = get_u64(is);
    manifest.push_back(std::move(e));
  }
  return {std::move(cfg), std::move(manifest)};
}

}  // namespace

ConfigBundle read_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  return read_header(is, path).first;
}

ConfigBundle load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  auto [cfg, manifest] = read_header(is, path);
  if (manifest.size() != params.names().size())
    throw CheckpointError("checkpoint holds " + std::to_string(manifest.size()) +
                          " parameters, model expects " +
                          std::to_string(params.names().size()));
  for (const auto& e : manifest) {
    if (!params.has(e.name))
      throw CheckpointError("checkpoint parameter not in model: " + e.name);
    Tensor t = params.get(e.name);
    if (t.shape() != e.shape)
      throw CheckpointError("shape mismatch for " + e.name + ": checkpoint " +
                            shape_str(e.shape) + " vs model " + shape_str(t.shape()));
    std::uint64_t block_len = get_u64(is);
    if (block_len != static_cast<std::uint64_t>(t.size()))
      throw CheckpointError("payload length mismatch for " + e.name);
    auto& val = t.value();
    for (std::uint64_t i = 0; i < block_len; ++i) {
      float f;
      if (!is.read(reinterpret_cast<char*>(&f), 4))
        throw CheckpointError("truncated payload in " + path);
      val[i] = static_cast<double>(f);
    }
  }
  return cfg;
}

// --- training loop ---

double dev_str_acc(Model& model, const Grammar& grammar,
                   const std::vector<TrainExample>& dev_set, int max_steps) {
  if (dev_set.empty()) return -1.0;
  size_t hits = 0;
  for (const auto& ex : dev_set) {
    auto ref = Grammar::linearize(grammar.derive_applied(ex.applied).tree);
    auto res = generate_greedy(model, grammar, ex.nl, max_steps);
    if (res.ok() && res.ranked.front().tokens == ref) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(dev_set.size());
}

TrainResult train_model(Model& model, const Grammar& grammar,
                        const std::vector<TrainExample>& train_set,
                        const std::vector<TrainExample>& dev_set, const ConfigBundle& cfg,
                        const std::string& out_dir, std::ostream* progress) {
  if (train_set.empty()) throw TrainError("empty training corpus");
  cfg.train.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream metrics(fs::path(out_dir) / "metrics.log", std::ios::app);
  if (!metrics) throw TrainError("cannot open metrics log in " + out_dir);

  Adafactor opt;
  std::mt19937_64 rng(cfg.train.seed);
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  const int batch = cfg.train.batch_size;
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // similar-length examples batch together so per-batch means average over
    // comparable step counts
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch)) {
      std::vector<size_t> b(order.begin() + static_cast<long>(i),
                            order.begin() + static_cast<long>(std::min(
                                                order.size(), i + static_cast<size_t>(batch))));
      std::sort(b.begin(), b.end(), [&](size_t a, size_t c) {
        return train_set[a].applied.size() < train_set[c].applied.size();
      });
      batches.push_back(std::move(b));
    }

    double epoch_loss = 0.0;
    long epoch_examples = 0;
    for (const auto& b : batches) {
      model.params().zero_grads();
      std::vector<Tensor> losses;
      for (size_t i : b) losses.push_back(example_loss(model, grammar, train_set[i], true));
      Tensor loss = mean_all(stack_scalars(losses));
      loss.backward();
      epoch_loss += loss.item() * static_cast<double>(b.size());
      epoch_examples += static_cast<long>(b.size());

      if (cfg.train.grad_clip > 0) {
        double norm2 = 0.0;
        for (const auto& [name, p] : model.params().items())
          for (double g : p.raw()->ensure_grad()) norm2 += g * g;
        double norm = std::sqrt(norm2);
        if (norm > cfg.train.grad_clip) {
          double s = cfg.train.grad_clip / norm;
          for (const auto& [name, p] : model.params().items())
            for (double& g : p.raw()->ensure_grad()) g *= s;
        }
      }
      int skipped = opt.step(model.params());
      if (skipped && progress)
        *progress << "epoch " << epoch << ": skipped " << skipped
                  << " parameter(s) with non-finite gradients\n";
    }
    result.final_loss = epoch_loss / static_cast<double>(epoch_examples);
    result.epochs_run = epoch;

    std::string stracc_field = "-";
    const bool eval_now =
        !dev_set.empty() && (epoch % cfg.train.eval_every == 0 || epoch == cfg.train.epochs);
    if (eval_now) {
      double acc = dev_str_acc(model, grammar, dev_set, cfg.inference.max_steps);
      std::ostringstream os;
      os << std::fixed << std::setprecision(2) << acc;
      stracc_field = os.str();
      if (acc > result.best_dev_stracc) {
        result.best_dev_stracc = acc;
        save_checkpoint((fs::path(out_dir) / "best.tgck").string(), cfg, model.params());
      }
    }
    metrics << epoch << "\t" << std::setprecision(17) << result.final_loss << "\t"
            << stracc_field << "\n";
    metrics.flush();
    if (progress)
      *progress << "epoch " << epoch << " loss " << result.final_loss
                << (stracc_field == "-" ? "" : " dev_stracc " + stracc_field) << "\n";

    if (cfg.train.checkpoint_every > 0 && epoch % cfg.train.checkpoint_every == 0)
      save_checkpoint((fs::path(out_dir) / ("epoch_" + std::to_string(epoch) + ".tgck")).string(),
                      cfg, model.params());
  }
  save_checkpoint((fs::path(out_dir) / "final.tgck").string(), cfg, model.params());
  return result;
}

}  // namespace treegen
