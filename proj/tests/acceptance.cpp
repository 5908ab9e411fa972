// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance --work-dir DIR [--only 1,2,9]
//
// Criteria 9 and 10 drive the CLI binary (MODMO_CLI) end to end.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "modmo/evaluate.hpp"
#include "modmo/optim.hpp"
#include "oracle_denoiser.hpp"

using namespace modmo;
using namespace modmo::oracle;
namespace fs = std::filesystem;
using modmo::testing::box_surface_samples;
using modmo::testing::pelvis_only;
using modmo::testing::random_rotation;
using modmo::testing::read_bytes;
using modmo::testing::static_clip;
using modmo::testing::unit_box;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream note;

  // Records a failed check; the first few go into the summary line.
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) note << "failed: ";
    else note << "; ";
    note << what;
    pass = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

MatD rmat(Rng& rng, Eigen::Index r, Eigen::Index c) { return random_mat(rng, r, c); }

// ---------------------------------------------------------------------------

void c1_rotations(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  double worst_orth = 0, worst_det = 0, worst_rt = 0;
  for (int i = 0; i < 10000; ++i) {
    const Rot6D r{Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(rng.normal(), rng.normal(), rng.normal())};
    Mat3 R;
    try {
      R = rot6d_to_matrix(r);
    } catch (const Error&) {
      continue;  // degenerate draw; probability zero in practice
    }
    worst_orth = std::max(worst_orth, (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff());
    worst_det = std::max(worst_det, std::abs(R.determinant() - 1.0));
    const Mat3 Q = random_rotation(rng);
    worst_rt = std::max(worst_rt, (rot6d_to_matrix(matrix_to_rot6d(Q)) - Q).cwiseAbs().maxCoeff());
  }
  const double dt = seconds_since(t0);
  o.check(worst_orth <= 1e-9, "orthonormality " + fmt(worst_orth));
  o.check(worst_det <= 1e-9, "determinant " + fmt(worst_det));
  o.check(worst_rt <= 1e-9, "round trip " + fmt(worst_rt));
  o.check(dt < 1.0, "runtime " + fmt(dt) + " s");
  o.note << (o.pass ? "" : " | ") << "orth " << fmt(worst_orth) << ", det " << fmt(worst_det) << ", round trip "
         << fmt(worst_rt) << ", " << fmt(dt) << " s";
}

void c2_algorithm(Outcome& o) {
  double worst = 0;
  for (std::uint64_t seed : {6u, 16u, 26u}) {
    Fixture f(4, 1, 3, 6, seed);
    worst = std::max(worst, (adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats) -
                             o_adapted(f.x, f.t, f.cond, f.mdm, f.br, f.feats))
                                .cwiseAbs()
                                .maxCoeff());
    for (auto& g : f.br.gates) g.setOnes();
    worst = std::max(worst, (adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats) -
                             o_adapted(f.x, f.t, f.cond, f.mdm, f.br, f.feats))
                                .cwiseAbs()
                                .maxCoeff());
  }
  o.check(worst <= 1e-9, "oracle mismatch " + fmt(worst));

  Fixture f(8, 2, 5, 7, 7);
  for (auto& g : f.br.gates) g.setZero();
  const MatD base = mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm);
  o.check(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, f.feats) == base, "zero gates not exact");
  o.check(adapted_forward<double>(f.x, f.t, 10, f.cond, f.mdm, f.br, MatD::Zero(5, 5)) == base,
          "zero condition not exact");
  o.note << (o.pass ? "" : " | ") << "max |adapted - oracle| " << fmt(worst);
}

template <class Model, class Loss>
double fd_worst(Model& m, const Model& grads, const Loss& loss) {
  auto ps = m.params();
  auto gs = const_cast<Model&>(grads).params();
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t p = 0; p < ps.size(); ++p)
    for (Eigen::Index i = 0; i < ps[p].value->size(); ++i) {
      double& v = ps[p].value->data()[i];
      const double orig = v;
      v = orig + h;
      const double lp = loss();
      v = orig - h;
      const double lm = loss();
      v = orig;
      worst = std::max(worst, rel_err(gs[p].value->data()[i], (lp - lm) / (2 * h)));
    }
  return worst;
}

void c3_gradients(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  Fixture f(8, 2, 4, 6, 9);
  ForwardTrace<double> tr;
  mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm, &tr);
  const auto gm = backward<double>(f.w, &tr, f.mdm, nullptr, true);
  const double wm = fd_worst(f.mdm, *gm.mdm, [&] {
    return (mdm_forward<double>(f.x, f.t, 10, f.cond, f.mdm).array() * f.w.array()).sum();
  });

  Fixture b(8, 2, 4, 6, 10);
  for (auto& g : b.br.gates) g.array() += 0.5;
  ForwardTrace<double> tb;
  adapted_forward<double>(b.x, b.t, 10, b.cond, b.mdm, b.br, b.feats, &tb);
  const auto gb = backward<double>(b.w, &tb, b.mdm, &b.br, false);
  const double wb = fd_worst(b.br, *gb.branch, [&] {
    return (adapted_forward<double>(b.x, b.t, 10, b.cond, b.mdm, b.br, b.feats).array() * b.w.array()).sum();
  });
  const double dt = seconds_since(t0);
  o.check(wm <= 1e-4, "base rel err " + fmt(wm));
  o.check(wb <= 1e-4, "branch rel err " + fmt(wb));
  o.check(!gb.mdm.has_value(), "frozen base produced gradients");
  o.check(dt < 120, "runtime " + fmt(dt) + " s");
  o.note << (o.pass ? "" : " | ") << "worst rel err base " << fmt(wm) << ", branch " << fmt(wb) << ", " << fmt(dt)
         << " s";
}

void c4_guidance(Outcome& o) {
  Rng rng(3);
  double worst = 0;
  bool zero_exact = true;
  for (int trial = 0; trial < 200; ++trial) {
    const MatD xu = rmat(rng, 5, 7), xa = rmat(rng, 5, 7), xb = rmat(rng, 5, 7);
    const MatD rs[2] = {xa - xu, xb - xu};
    const double ls[2] = {rng.uniform(-2, 4), rng.uniform(-2, 4)};
    const MatD both = guided_prediction<double>(xu, rs, ls);
    worst = std::max(worst, (both - (xu + ls[0] * rs[0] + ls[1] * rs[1])).cwiseAbs().maxCoeff());
    const MatD r0[1] = {rs[0]}, r1[1] = {rs[1]};
    const double l0[1] = {ls[0]}, l1[1] = {ls[1]}, one[1] = {1.0}, zero[2] = {0.0, 0.0};
    const MatD sum = guided_prediction<double>(xu, r0, l0) + guided_prediction<double>(xu, r1, l1) - xu;
    worst = std::max(worst, (both - sum).cwiseAbs().maxCoeff());
    worst = std::max(worst, (guided_prediction<double>(xu, r0, one) - xa).cwiseAbs().maxCoeff());
    zero_exact = zero_exact && guided_prediction<double>(xu, rs, zero) == xu;
  }
  o.check(worst <= 1e-12, "identity error " + fmt(worst));
  o.check(zero_exact, "lambda = 0 does not return the unconditioned prediction");
  o.note << (o.pass ? "" : " | ") << "max error " << fmt(worst);
}

void c5_fusion(Outcome& o) {
  Rng rng(5);
  double worst_fd = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const MatD xu = rmat(rng, 4, 6), ri = rmat(rng, 4, 6), rc = rmat(rng, 4, 6), a = rmat(rng, 4, 6);
    const double li = rng.uniform(0, 4), lc = rng.uniform(0, 4), h = 1e-5;
    auto fused = [&](double x) { return MatD(xu + x * ri + lc * rc); };
    const double fd = (fusion_loss<double>(fused(li + h), a) - fusion_loss<double>(fused(li - h), a)) / (2 * h);
    worst_fd = std::max(worst_fd, std::abs(fusion_gradient<double>(fused(li), a, ri) - fd));
  }
  int increased = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.below(5)), c = 1 + static_cast<Eigen::Index>(rng.below(8));
    const MatD xu = rmat(rng, r, c), ri = rmat(rng, r, c) * rng.uniform(0.01, 5), rc = rmat(rng, r, c) * rng.uniform(0.01, 5);
    const MatD ai = rmat(rng, r, c), ac = rmat(rng, r, c);
    FusionState st;
    st.lambda_min = -1e9;
    st.lambda_max = 1e9;
    st.lambda_int = rng.uniform(-2, 4);
    st.lambda_cospeech = rng.uniform(-2, 4);
    st.eta = rng.uniform() * std::min(fusion_stability_bound<double>(ri), fusion_stability_bound<double>(rc));
    const MatD X = xu + st.lambda_int * ri + st.lambda_cospeech * rc;
    const FusionState nx = adaptive_fusion_update<double>(X, ai, ac, ri, rc, st);
    const MatD Xi = xu + nx.lambda_int * ri + st.lambda_cospeech * rc;
    const MatD Xc = xu + st.lambda_int * ri + nx.lambda_cospeech * rc;
    if (fusion_loss<double>(Xi, ai) > fusion_loss<double>(X, ai) + 1e-12) ++increased;
    if (fusion_loss<double>(Xc, ac) > fusion_loss<double>(X, ac) + 1e-12) ++increased;
  }
  o.check(worst_fd <= 1e-8, "gradient error " + fmt(worst_fd));
  o.check(increased == 0, std::to_string(increased) + " updates increased the loss");
  o.note << (o.pass ? "" : " | ") << "gradient error " << fmt(worst_fd) << ", loss increases " << increased << "/2000";
}

void c6_diffusion(Outcome& o) {
  const auto s = NoiseSchedule::cosine(50);
  Rng rng(2);
  const MatD x0 = rmat(rng, 4, 6), eps = rmat(rng, 4, 6);
  bool exact = true;
  for (int t : {0, 49}) {
    const double ab = s.alpha_bars[static_cast<std::size_t>(t)];
    exact = exact && q_sample<double>(x0, t, MatD::Zero(4, 6), s) == std::sqrt(ab) * x0;
    exact = exact && q_sample<double>(MatD::Zero(4, 6), t, eps, s) == std::sqrt(1 - ab) * eps;
    exact = exact && q_sample<double>(x0, t, eps, s) == std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
  }
  o.check(exact, "q_sample endpoints not exact");
  o.check(s.alpha_bars.front() > 0.99 && s.alpha_bars.back() < 1e-3, "schedule endpoints");

  const MatD target = rmat(rng, 8, kFrameDim);
  MatD x = rmat(rng, 8, kFrameDim);
  for (int t = 49; t >= 0; --t) x = p_sample_step<double>(x, t, target, s, MatD::Zero(8, kFrameDim));
  const double err = (x - target).cwiseAbs().maxCoeff();
  o.check(err <= 1e-6, "recovery error " + fmt(err));
  o.note << (o.pass ? "" : " | ") << "noiseless recovery error " << fmt(err);
}

void c7_geometry(Outcome& o) {
  ObjectGeometry sph;
  sph.primitives.push_back(Sphere{Vec3::Zero(), 1.0});
  o.check(sdf(unit_box(), Vec3::Zero()) == -0.5, "box center");
  o.check(sdf(sph, Vec3(0, 0, 2)) == 1.0, "sphere");
  o.check(sdf(unit_box(), Vec3(0.5, 0.1, -0.2)) == 0.0, "box face");
  o.check(sdf(unit_box(), Vec3(1.5, 0, 0)) == 1.0, "box outside");

  Rng rng(4);
  const Box box{Vec3(0.3, -0.2, 0.45), Vec3(0.25, 0.3, 0.45), rot_z(0.4)};
  ObjectGeometry ob;
  ob.primitives.push_back(box);
  const auto bps = bps_fit_to_object(bps_generate(11, 512, 1.0), ob);
  const auto surf = box_surface_samples(box, 100000, rng);
  const Vec3 h = box.half_extents;
  const double res = std::sqrt(8 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z()) / 100000.0);
  const VecD f = bps_object_features(bps, ob);
  double worst = 0;
  for (std::size_t i = 0; i < bps.points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : surf) best = std::min(best, (p - bps.points[i]).squaredNorm());
    worst = std::max(worst, std::abs(std::sqrt(best) - f(static_cast<Eigen::Index>(i))));
  }
  o.check(worst < 2 * res, "BPS error " + fmt(worst) + " vs resolution " + fmt(res));

  ObjectGeometry far = unit_box();
  std::get<Box>(far.primitives[0]).center = Vec3(10, 10, 0);
  ObjectGeometry inside = unit_box();
  std::get<Box>(inside.primitives[0]).center = default_root_start();
  const double r0 = penetration_ratio(static_clip(10), default_skeleton(), default_body_proxy(), far);
  const double r1 = penetration_ratio(static_clip(10), default_skeleton(), pelvis_only(0.1), inside);
  o.check(r0 == 0.0, "far ratio " + fmt(r0));
  o.check(r1 == 1.0, "inside ratio " + fmt(r1));
  o.note << (o.pass ? "" : " | ") << "BPS error " << fmt(worst) << " (2x resolution " << fmt(2 * res)
         << "), ratios " << r0 << "/" << r1;
}

void c8_metrics(Outcome& o) {
  Rng rng(8);
  MatD feats = rmat(rng, 40, 6);
  const auto g = fit_gaussian(feats);
  const double self = frechet_gesture_distance(g, g);
  o.check(self <= 1e-8, "FGD(a, a) " + fmt(self));
  double worst1d = 0;
  for (int i = 0; i < 50; ++i) {
    const double m1 = rng.normal(), m2 = rng.normal(), s1 = rng.uniform(0.01, 3), s2 = rng.uniform(0.01, 3);
    GaussianFit a{VecD::Constant(1, m1), MatD::Constant(1, 1, s1 * s1)};
    GaussianFit b{VecD::Constant(1, m2), MatD::Constant(1, 1, s2 * s2)};
    worst1d = std::max(worst1d, std::abs(frechet_gesture_distance(a, b) - ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2))));
  }
  o.check(worst1d <= 1e-9, "1-D FGD error " + fmt(worst1d));

  double worst_bc = 0;
  for (double d : {0.0, 0.02, 0.07, 0.15}) {
    const std::vector<double> k = {1.0 + d}, a = {1.0};
    worst_bc = std::max(worst_bc, std::abs(beat_consistency_from_times(k, a, 0.1) - std::exp(-d * d / 0.02)));
  }
  o.check(worst_bc <= 1e-9, "BC error " + fmt(worst_bc));

  MatD df = rmat(rng, 7, 5);
  double s = 0;
  int n = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j) s += (df.row(i) - df.row(j)).norm(), ++n;
  const double div_err = std::abs(diversity(df, n, 0) - s / n);
  o.check(div_err <= 1e-12, "diversity error " + fmt(div_err));
  o.note << (o.pass ? "" : " | ") << "FGD self " << fmt(self) << ", 1-D " << fmt(worst1d) << ", BC " << fmt(worst_bc)
         << ", diversity " << fmt(div_err);
}

// ---------------------------------------------------------------------------
// CLI-driven criteria

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MODMO_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::vector<double> csv_column(const fs::path& p, const std::string& name) {
  std::ifstream in(p);
  std::string line;
  std::vector<double> out;
  int col = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (col < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == name) col = static_cast<int>(i);
      require(col >= 0, ErrorCode::Format, p.string() + " has no column " + name);
      continue;
    }
    out.push_back(std::stod(cells[static_cast<std::size_t>(col)]));
  }
  return out;
}

void c9_end_to_end(Outcome& o, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = work / "e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  const fs::path data = dir / "data" / "manifest.json";
  const fs::path ck = dir / "ck";
  const std::string mdm = (ck / "mdm.ckpt").string();
  bool ok = run_cli("gen-data --out-dir " + (dir / "data").string(), log) == 0;
  ok = ok && run_cli("train mdm --data " + data.string() + " --out-dir " + ck.string(), log) == 0;
  ok = ok && run_cli("train interaction --data " + data.string() + " --checkpoint " + mdm + " --out-dir " + ck.string(), log) == 0;
  ok = ok && run_cli("train cospeech --data " + data.string() + " --checkpoint " + mdm + " --out-dir " + ck.string(), log) == 0;
  ok = ok && run_cli("evaluate --data " + data.string() + " --checkpoint " + mdm + " --checkpoint " +
                         (ck / "interaction.ckpt").string() + " --checkpoint " + (ck / "cospeech.ckpt").string() +
                         " --out-dir " + (dir / "eval").string(),
                     log) == 0;
  if (!ok) {
    o.check(false, "pipeline command failed, see " + log.string());
    return;
  }
  const double dt = seconds_since(t0);

  const Corpus corpus = load_corpus(data);
  const std::size_t n_train = corpus.manifest.split("train").size();
  const auto loss = csv_column(ck / "mdm_loss.csv", "total");
  const auto [first, last] = smoothed_ends(loss, 50);
  const json rep = read_json_file((dir / "eval" / "report.json").string());
  const json& agg = rep.at("aggregate");
  auto get = [&](const char* mode, const char* key) { return agg.at(mode).at(key).get<double>(); };
  const double pen_u = get("sit_uncond", "penetration_ratio"), pen_i = get("interaction", "penetration_ratio");
  const double pos_u = get("sit_uncond", "goal_pos_err"), pos_i = get("interaction", "goal_pos_err");
  const double bc_u = get("talk_uncond", "bc"), bc_c = get("cospeech", "bc"), bc_f = get("fused", "bc");
  const double pen_f = get("fused", "penetration_ratio"), pen_k = get("concat", "penetration_ratio");
  const double n_scenes = get("interaction", "count");

  o.check(n_train == 64, "train split has " + std::to_string(n_train) + " clips");
  o.check(n_scenes == 16, "held-out scenes " + fmt(n_scenes));
  o.check(last <= 0.5 * first, "(a) stage-1 loss " + fmt(first) + " -> " + fmt(last));
  o.check(pen_i < pen_u, "(b) penetration " + fmt(pen_i) + " vs uncond " + fmt(pen_u));
  o.check(pos_i < pos_u, "(b) goal pos err " + fmt(pos_i) + " vs uncond " + fmt(pos_u));
  o.check(bc_c > bc_u, "(c) BC " + fmt(bc_c) + " vs uncond " + fmt(bc_u));
  o.check(pen_f < pen_k, "(d) fused penetration " + fmt(pen_f) + " vs concat " + fmt(pen_k));
  o.check(std::abs(bc_f - bc_c) <= 0.1, "(d) fused BC " + fmt(bc_f) + " vs cospeech " + fmt(bc_c));
  o.note << (o.pass ? "" : " | ") << "(a) loss " << fmt(first) << " -> " << fmt(last) << "; (b) pen " << fmt(pen_i)
         << " vs " << fmt(pen_u) << ", pos " << fmt(pos_i) << " vs " << fmt(pos_u) << "; (c) BC " << fmt(bc_c)
         << " vs " << fmt(bc_u) << "; (d) pen " << fmt(pen_f) << " vs concat " << fmt(pen_k) << ", BC gap "
         << fmt(std::abs(bc_f - bc_c)) << "; " << fmt(dt) << " s";
}

const char* kDetConfig = R"({
  "seed": 7,
  "corpus": {"seed": 3, "n_interaction": 4, "n_gesture": 4, "n_eval_interaction": 2, "n_eval_gesture": 2},
  "model": {"d_model": 16, "heads": 2, "n_blocks": 8, "d_time": 16},
  "diffusion": {"T": 10},
  "bps": {"n": 64},
  "train": {"mdm": {"steps": 30, "batch": 2}, "interaction": {"steps": 10, "batch": 2},
            "cospeech": {"steps": 10, "batch": 2}}
})";

// Every regular file under a, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& a) {
  std::map<std::string, std::string> m;
  for (const auto& f : fs::recursive_directory_iterator(a))
    if (f.is_regular_file()) m[fs::relative(f.path(), a).string()] = read_bytes(f.path());
  return m;
}

void c10_determinism(Outcome& o, const fs::path& work) {
  const fs::path dir = work / "det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << kDetConfig;
  const std::string c = "--config " + cfg.string() + " --seed 21";
  int n_files = 0, n_cmds = 0;

  // Runs a command twice into <name>_1 and <name>_2; later steps read from _1.
  auto twice = [&](const std::string& name, const std::string& args) {
    const fs::path a = dir / (name + "_1"), b = dir / (name + "_2");
    const int ra = run_cli(args + " --out-dir " + a.string(), log);
    const int rb = run_cli(args + " --out-dir " + b.string(), log);
    ++n_cmds;
    if (ra != 0 || rb != 0) {
      o.check(false, name + " exited " + std::to_string(ra) + "/" + std::to_string(rb));
      return a;
    }
    const auto ta = tree(a), tb = tree(b);
    o.check(ta == tb, name + " outputs differ");
    n_files += static_cast<int>(ta.size());
    return a;
  };

  const fs::path data = twice("gen-data", "gen-data " + c) / "manifest.json";
  const std::string d = " --data " + data.string();
  const fs::path ck = twice("train-mdm", "train mdm " + c + d);
  const std::string mdm = " --checkpoint " + (ck / "mdm.ckpt").string();
  const fs::path ci = twice("train-interaction", "train interaction " + c + d + mdm);
  const fs::path cc = twice("train-cospeech", "train cospeech " + c + d + mdm);
  const std::string all = mdm + " --checkpoint " + (ci / "interaction.ckpt").string() + " --checkpoint " +
                          (cc / "cospeech.ckpt").string();
  const fs::path root = data.parent_path();
  const fs::path sm = twice("sample", "sample " + c + all + " --prompt 'a person walks to the chair and sits down'" +
                                          " --object " + (root / "objects" / "eval_sit_000.json").string() +
                                          " --audio " + (root / "audio" / "eval_talk_000.wav").string() +
                                          " --transcript " + (root / "transcripts" / "eval_talk_000.json").string());
  twice("evaluate", "evaluate " + c + all + d + " --save-samples");
  const fs::path cat = twice("concat-baseline", "concat-baseline --upper " + (sm / "sample.clip").string() +
                                                    " --lower " + (root / "clips" / "eval_sit_000.clip").string());
  twice("export", "export --clip " + (cat / "concat.clip").string() + " --object " +
                      (root / "objects" / "eval_sit_000.json").string());
  o.note << (o.pass ? "" : " | ") << n_cmds << " commands run twice, " << n_files << " files compared";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_option("--only", only, "Run just these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"rotation suite", c1_rotations},
      {"adapted forward vs oracle", c2_algorithm},
      {"gradients vs finite differences", c3_gradients},
      {"guidance algebra", c4_guidance},
      {"adaptive fusion", c5_fusion},
      {"diffusion suite", c6_diffusion},
      {"geometry suite", c7_geometry},
      {"metric suite", c8_metrics},
      {"end-to-end smoke", [&](Outcome& o) { c9_end_to_end(o, work); }},
      {"CLI determinism", [&](Outcome& o) { c10_determinism(o, work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.note.str() << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
