// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero when a gated criterion fails.

#include "dcc/checkpoint.hpp"
#include "dcc/dataset_io.hpp"
#include "dcc/evaluation.hpp"
#include "dcc/pairing.hpp"
#include "dcc/synth.hpp"
#include "dcc/training.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace dcc;
using Mat = MatrixT<double>;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::map<int, std::string> lines;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::ostringstream s;
  s << (pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << title << "  (" << detail << ")";
  lines[id] = s.str();
  std::cerr << "finished criterion " << id << std::endl;
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// 1
void loss_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> pick_n(2, 16), pick_d(2, 32);
  std::uniform_real_distribution<double> pick_scale(0.1, 2.0);
  LossConfig cfg;
  cfg.alpha = 0.9;
  cfg.beta = 1.1;
  double worst = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int n = pick_n(rng), d = pick_d(rng);
    const double s = pick_scale(rng);
    const Mat a = oracle::random_matrix(n, d, rng, s);
    const Mat b = oracle::random_matrix(n, d, rng, s);
    worst = std::max(worst, oracle::relative_error(mse_align<double>(a, b), oracle::mse(a, b)));
    worst = std::max(worst, oracle::relative_error(variance_term<double>(a, cfg.gamma, cfg.eps),
                                                   oracle::variance_term(a, cfg.gamma, cfg.eps)));
    worst = std::max(worst, oracle::relative_error(covariance_term<double>(a), oracle::covariance_term(a)));

    auto p = oracle::random_features(n, d, 3, rng);
    p.for_each_matrix([s](Mat& m) { m *= s; });
    const auto br = total_loss<double>(p, cfg);
    worst = std::max(worst, oracle::relative_error(decomposition_loss<double>(p).total, oracle::decomposition(p)));
    worst = std::max(worst, oracle::relative_error(composition_loss<double>(p), oracle::composition(p)));
    worst = std::max(worst, oracle::relative_error(regularization_loss<double>(p, cfg), oracle::regularization(p, cfg)));
    worst = std::max(worst, oracle::relative_error(br.total, oracle::total(p, cfg)));
  }
  const double t = seconds_since(start);
  report(1, "loss terms match scalar-loop oracles", worst <= 1e-9 && t < 10.0,
         "120 inputs, max rel err " + fmt(worst) + ", " + fmt(t, 3) + " s");
}

// 2
void closed_forms() {
  LossConfig cfg;
  const Mat constant = Mat::Constant(16, 8, -0.7);
  const double v = variance_term<double>(constant, cfg.gamma, cfg.eps);
  const double vc = vc_loss<double>(constant, cfg);

  std::mt19937_64 rng(102);
  Mat x = oracle::random_matrix(32, 8, rng);
  x = x.rowwise() - x.colwise().mean();
  Eigen::HouseholderQR<Mat> qr(x);
  const Mat white = Mat(qr.householderQ() * Mat::Identity(32, 8)) * std::sqrt(31.0);
  const double w = vc_loss<double>(white, cfg);

  const bool pass = std::abs(v - 0.99) <= 1e-9 && std::abs(vc - 4.95) <= 1e-9 && w <= 1e-7;
  report(2, "closed-form VC values", pass,
         "V(const) " + fmt(v, 12) + ", vc(const) " + fmt(vc, 12) + ", vc(white) " + fmt(w));
}

// 3
void gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(103);
  LossConfig cfg;
  cfg.alpha = 1.3;
  cfg.beta = 0.7;
  const double h = 1e-5;
  double worst = 0;
  std::size_t matrices = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = oracle::random_features(8, 6, 3, rng);
    int idx = 0;
    p.for_each_matrix([&](Mat& m) { m *= (idx++ % 3 == 0) ? 0.4 : 1.6; });
    auto grad = p.zeros_like();
    total_loss<double>(p, cfg, &grad);
    std::vector<Mat*> xs;
    p.for_each_matrix([&](Mat& m) { xs.push_back(&m); });
    std::vector<const Mat*> gs;
    grad.for_each_matrix([&](const Mat& m) { gs.push_back(&m); });
    matrices = xs.size();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      for (Eigen::Index i = 0; i < xs[k]->size(); ++i) {
        double& x = xs[k]->data()[i];
        const double saved = x;
        x = saved + h;
        const double up = total_loss<double>(p, cfg).total;
        x = saved - h;
        const double down = total_loss<double>(p, cfg).total;
        x = saved;
        worst = std::max(worst, oracle::relative_error(gs[k]->data()[i], (up - down) / (2 * h)));
      }
    }
  }
  const double t = seconds_since(start);
  report(3, "analytic loss gradients match central differences", worst <= 1e-5 && matrices == 16 && t < 60.0,
         std::to_string(matrices) + " matrices x 10 instances, max rel err " + fmt(worst) + ", " + fmt(t, 3) + " s");
}

// 5
void shared_backbone() {
  auto one = ModelConfig::desk();
  one.modalities = {Modality::joint};
  const Model a(one, 1);
  const Model b(ModelConfig::desk(), 1);
  const bool pass = a.encoder_parameter_count() == b.encoder_parameter_count() &&
                    a.embedding_parameter_count() < b.embedding_parameter_count() &&
                    a.projector_parameter_count() < b.projector_parameter_count();
  report(5, "encoder parameters independent of the modality set", pass,
         "encoder {J} " + std::to_string(a.encoder_parameter_count()) + " vs {J,M,B} " +
             std::to_string(b.encoder_parameter_count()) + "; embeddings " +
             std::to_string(a.embedding_parameter_count()) + " vs " + std::to_string(b.embedding_parameter_count()));
}

// 6
void pairing() {
  SynthConfig sc;
  sc.n_performances = 2;
  sc.n_views = 3;
  const auto ds = synth_generate(sc);
  const PerformanceIndex index(ds);
  Rng rng(106);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 5000; ++i) {
    const auto [x, y] = sample_pair_indices(index, 0, true, rng);
    int a = ds.sequences[x].camera_id, b = ds.sequences[y].camera_id;
    seen.emplace(std::min(a, b), std::max(a, b));
  }
  std::set<std::pair<int, int>> enumerated;
  for (std::size_t r = 0; r < pair_space_size(3); ++r) enumerated.insert(unordered_pair(r, 3));

  sc.n_views = 1;
  const auto single = synth_generate(sc);
  const PerformanceIndex single_index(single);
  bool degenerate = true;
  AugmentationConfig aug;
  aug.frames_out = 16;
  for (int i = 0; i < 100; ++i) {
    const auto [x, y] = sample_pair_indices(single_index, 1, true, rng);
    degenerate = degenerate && x == y;
  }
  const auto [p, q] = sample_positive_pair(single, single_index, 0, true, aug, rng);
  degenerate = degenerate && p.camera_id == q.camera_id && !(p.coords == q.coords);

  report(6, "multi-view pairing", seen.size() == 6 && enumerated.size() == 6 && degenerate,
         std::to_string(seen.size()) + " unordered pairs observed for 3 views; 1 view gives same-clip pairs with "
                                       "independent augmentation: " +
             (degenerate ? "yes" : "no"));
}

// 7
void data_layer() {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<int> k(-64, 64);
  std::normal_distribution<float> g(0.0f, 1.0f);
  bool bones = true, motion = true, views = true;
  for (const auto& topo : {SkeletonTopology::ntu25(), SkeletonTopology::body11(), SkeletonTopology::binary_tree(13)}) {
    Coords x(3, topo.n_joints(), 12);
    for (auto& v : x.data()) v = static_cast<float>(k(rng)) / 8.0f;
    bones = bones && oracle::joints_from_bones(derive_bone(x, topo), x, topo) == x;
    motion = motion && oracle::joints_from_motion(derive_motion(x), x) == x;
    Coords r(3, topo.n_joints(), 12);
    for (auto& v : r.data()) v = g(rng);
    const auto vw = make_views(r);
    views = views && from_temporal_view(vw.temporal, 3) == r && from_spatial_view(vw.spatial, 3) == r;
  }

  SynthConfig sc;
  sc.n_performances = 6;
  const auto ds = synth_generate(sc);
  std::ostringstream a;
  write_dataset(a, ds);
  std::istringstream ain(a.str());
  const auto back = read_dataset(ain);
  std::ostringstream a2;
  write_dataset(a2, back);
  const bool skd = back == ds && a2.str() == a.str();

  const Model model(ModelConfig::desk(), 7);
  std::ostringstream c;
  write_checkpoint(c, checkpoint_from_model(model));
  std::istringstream cin(c.str());
  const auto restored = model_from_checkpoint(read_checkpoint(cin));
  bool ckpt = restored.config() == model.config();
  for (std::size_t i = 0; i < model.parameters().all().size(); ++i) {
    ckpt = ckpt && restored.parameters().all()[i].var.value() == model.parameters().all()[i].var.value();
  }
  std::ostringstream c2;
  write_checkpoint(c2, checkpoint_from_model(restored));
  ckpt = ckpt && c2.str() == c.str();

  double worst = 0;
  std::uniform_real_distribution<double> angle(-3.1, 3.1);
  for (int trial = 0; trial < 20; ++trial) {
    Coords x(3, 25, 8);
    for (auto& v : x.data()) v = g(rng);
    const auto r = rotate(x, angle(rng), angle(rng), angle(rng));
    for (int t = 0; t < 8; ++t) {
      for (int i = 0; i < 25; ++i) {
        for (int j = i + 1; j < 25; ++j) {
          double d0 = 0, d1 = 0;
          for (int ch = 0; ch < 3; ++ch) {
            d0 += std::pow(static_cast<double>(x(ch, i, t)) - x(ch, j, t), 2);
            d1 += std::pow(static_cast<double>(r(ch, i, t)) - r(ch, j, t), 2);
          }
          worst = std::max(worst, oracle::relative_error(std::sqrt(d1), std::sqrt(d0)));
        }
      }
    }
  }
  const bool pass = bones && motion && views && skd && ckpt && worst <= 1e-5;
  std::string detail = std::string("bone ") + (bones ? "exact" : "MISMATCH") + ", motion " +
                       (motion ? "exact" : "MISMATCH") + ", views " + (views ? "exact" : "MISMATCH") + ", SKD1 " +
                       (skd ? "exact" : "MISMATCH") + ", checkpoint " + (ckpt ? "exact" : "MISMATCH") +
                       ", rotation rel err " + fmt(worst);
  report(7, "data-layer oracles", pass, detail);
}

// 10
void protocol_sanity() {
  FeatureBank train, test;
  const int classes = 5;
  train.features = MatrixF::Zero(100, classes);
  test.features = MatrixF::Zero(50, classes);
  for (int i = 0; i < 100; ++i) {
    train.labels.push_back(i % classes);
    train.features(i, i % classes) = 1.0f;
  }
  for (int i = 0; i < 50; ++i) {
    test.labels.push_back((i * 3) % classes);
    test.features(i, (i * 3) % classes) = 1.0f;
  }
  const double one_hot = linear_probe(train, test);

  std::mt19937_64 rng(110);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_int_distribution<int> label(0, 3);
  auto random_bank = [&](int n) {
    FeatureBank b;
    b.features.resize(n, 32);
    for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = g(rng);
    for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
    return b;
  };
  const auto rtrain = random_bank(400);
  const auto rtest = random_bank(400);
  const double chance_acc = linear_probe(rtrain, rtest);

  KnnConfig self;
  self.exclude_self = true;
  const auto knn = knn_predict(rtrain, rtrain.features, self);
  const auto brute = oracle::brute_force_1nn(rtrain.features, rtrain.labels, rtrain.features, true);

  const bool pass = one_hot == 1.0 && knn == brute && std::abs(chance_acc - 0.25) <= 0.1;
  report(10, "evaluation protocol sanity", pass,
         "one-hot probe " + fmt(one_hot) + ", self-retrieval " + (knn == brute ? "matches" : "differs from") +
             " brute force on 400 rows, random-feature probe " + fmt(chance_acc) + " vs chance 0.25");
}

struct RunResult {
  double linear = 0;
  double knn = 0;
  double first_loss = 0;
  double final_loss = 0;
  bool identity = true;
  int identity_steps = 0;
  int epochs = 0;
  double seconds = 0;
};

RunResult train_and_evaluate(const Dataset& train, const Dataset& test, TrainConfig cfg) {
  const auto start = Clock::now();
  cfg.log_steps = true;
  PretrainOptions opts;
  RunResult out;
  const auto result = pretrain(train, cfg, opts);
  for (const auto& s : result.steps) {
    if (s.epoch >= 5) continue;
    const double want = cfg.loss.alpha * s.loss.decomposition + cfg.loss.beta * s.loss.composition +
                        s.loss.regularization;
    out.identity = out.identity && std::abs(s.loss.total - want) <= 1e-6 * std::max(1e-12, std::abs(want));
    ++out.identity_steps;
  }
  out.epochs = result.epochs_completed;
  out.first_loss = result.epochs.front().total;
  out.final_loss = result.epochs.back().total;
  const std::vector<Modality> all{Modality::joint, Modality::bone, Modality::motion};
  const auto tr = extract_bank(result.model, train, all, "train");
  const auto te = extract_bank(result.model, test, all, "test");
  out.linear = linear_probe(tr, te);
  out.knn = knn_retrieve(tr, te);
  out.seconds = seconds_since(start);
  return out;
}

void learning_gates() {
  SynthConfig sc;
  sc.n_classes = 4;
  sc.n_views = 2;
  sc.n_joints = 11;
  sc.n_frames = 16;
  sc.noise_sd = 0.02;
  sc.n_performances = 600;
  auto train = synth_generate(sc);
  const auto test = split_off_performances(train, 400);

  const auto base_cfg = TrainConfig::desk();
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<RunResult> full, baseline, composition_only;
  for (auto seed : seeds) {
    auto cfg = base_cfg;
    cfg.seed = seed;
    full.push_back(train_and_evaluate(train, test, cfg));

    auto b = cfg;
    b.model.decomposition = DecompositionMode::global;
    b.loss.beta = 0.0;
    baseline.push_back(train_and_evaluate(train, test, b));

    auto c = cfg;
    c.loss.alpha = 0.0;
    composition_only.push_back(train_and_evaluate(train, test, c));
  }

  // 4: every step of the first five epochs of every full run.
  bool identity = true;
  int steps = 0;
  for (const auto& r : full) {
    identity = identity && r.identity && r.epochs >= 5;
    steps += r.identity_steps;
  }
  report(4, "logged total equals alpha*L_d + beta*L_c + L_reg on every step", identity && steps > 0,
         std::to_string(steps) + " steps over the first 5 epochs of " + std::to_string(full.size()) + " runs");

  // 8
  bool gate8 = true;
  std::string detail;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& r = full[i];
    gate8 = gate8 && r.linear >= 0.50 && r.knn >= 0.45 && r.final_loss < r.first_loss && r.epochs <= 100 &&
            r.seconds < 900.0;
    detail += (i ? "; " : "") + std::string("seed ") + std::to_string(seeds[i]) + ": linear " + fmt(r.linear) +
              ", 1-NN " + fmt(r.knn) + ", loss " + fmt(r.first_loss) + " -> " + fmt(r.final_loss) + ", " +
              fmt(r.seconds, 3) + " s";
  }
  report(8, "desk-scale learning gate (" + std::to_string(base_cfg.max_epochs) + " epochs)", gate8, detail);

  // 9
  auto mean_linear = [](const std::vector<RunResult>& rs) {
    double s = 0;
    for (const auto& r : rs) s += r.linear;
    return s / static_cast<double>(rs.size());
  };
  const double f = mean_linear(full), b = mean_linear(baseline), c = mean_linear(composition_only);
  report(9, "full objective vs baseline and composition-only", f >= b - 0.02 && f - c >= 0.0,
         "mean linear over 3 seeds: full " + fmt(f) + ", baseline " + fmt(b) + ", composition-only " + fmt(c));
}

}  // namespace

int main() {
  std::cout << "acceptance: criteria 1-10 gated, 11 optional" << std::endl;
  loss_oracles();
  closed_forms();
  gradients();
  shared_backbone();
  pairing();
  data_layer();
  protocol_sanity();
  learning_gates();
  for (const auto& [id, line] : lines) std::cout << line << std::endl;
  std::cout << "SKIP  11  NTU-60 split sizes and full-scale manifest (needs the NTU-60 skeleton release)" << std::endl;
  std::cout << (failures == 0 ? "all gated criteria passed" : std::to_string(failures) + " gated criteria failed")
            << std::endl;
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
