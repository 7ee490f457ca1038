// Acceptance gate: runs every primary criterion and prints one PASS/FAIL
// line per criterion. Exits non-zero when any criterion fails.

#include <signal.h>
#include <sys/wait.h>

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "livestyle/ast.hpp"
#include "livestyle/cyclegan.hpp"
#include "livestyle/gatys.hpp"
#include "livestyle/service.hpp"
#include "test_util.hpp"

using namespace livestyle;
using nlohmann::json;

namespace {

// Collects failed checks and measurements for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  void near(double got, double want, double rel, const std::string& what) {
    const double tol = rel * std::max(1.0, std::abs(want));
    std::ostringstream s;
    s << what << ": got " << got << ", want " << want;
    expect(std::abs(got - want) <= tol, s.str());
  }
  void note(const std::string& n) { notes_.push_back(n); }

  std::size_t checks() const { return checks_; }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

backbone::BackboneModel<float> tiny_model(std::uint64_t seed = 0) {
  const auto spec = backbone::tiny_spec();
  return backbone::load_weights(backbone::random_weights(spec, seed), spec);
}

backbone::FeatureMap<double> fmap(std::size_t c, std::vector<double> d) {
  return {"f", c, d.size() / c, 1, d.size() / c, d};
}

// ------------------------------------------------------------ loss oracles

void loss_formulas(Check& c) {
  using namespace gatys;
  c.expect(content_loss(fmap(1, {3, -1}), fmap(1, {3, -1})) == 0.0, "content_loss F=P");
  c.near(content_loss(fmap(1, {1, 0}), fmap(1, {0, 0})), 0.5, 1e-6, "content_loss [1,0] vs [0,0]");
  c.near(content_loss(fmap(1, {2, 1}), fmap(1, {0, 1})), 2.0, 1e-6, "content_loss [2,1] vs [0,1]");

  backbone::GramMatrix<double> g{1, {2}}, z{1, {0}};
  c.expect(layer_style_error(g, g, 1, 1) == 0.0, "layer_style_error Gx=Ga");
  c.near(layer_style_error(g, z, 1, 1), 1.0, 1e-6, "layer_style_error N=M=1");
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const std::size_t N = 1 + rng.index(5), M = 1 + rng.index(20);
    backbone::FeatureMap<double> x{"x", N, M, 1, M, {}}, a{"a", N, M, 1, M, {}};
    for (std::size_t i = 0; i < N * M; ++i) {
      x.data.push_back(rng.uniform(-1, 1));
      a.data.push_back(rng.uniform(-1, 1));
    }
    const double k = rng.uniform(0.3, 3.0);
    auto xs = x, as = a;
    for (auto& v : xs.data) v *= k;
    for (auto& v : as.data) v *= k;
    const double e = layer_style_error(backbone::gram_matrix(x), backbone::gram_matrix(a), N, M);
    const double es = layer_style_error(backbone::gram_matrix(xs), backbone::gram_matrix(as), N, M);
    c.near(es / e, std::pow(k, 4), 1e-6, "layer_style_error c^4 scaling");
  }

  const std::vector<double> errs{1, 2};
  c.expect(style_loss(errs, std::vector<double>{0, 0}) == 0.0, "style_loss zero weights");
  c.near(style_loss(errs, std::vector<double>{0.5, 0.5}), 1.5, 1e-6, "style_loss [1,2]");
  c.near(style_loss(std::vector<double>{0.7}, std::vector<double>{1.0}), 0.7, 1e-6, "style_loss single layer");

  c.expect(total_loss(2, 3, 1, 0) == 2.0, "total_loss beta=0");
  c.expect(total_loss(2, 3, 0, 1) == 3.0, "total_loss alpha=0");
  c.expect(total_loss(2, 3, 1, 10) == 32.0, "total_loss arithmetic");

  c.near(ast::ast_style_term(g, z, 4), 1.0, 1e-6, "ast_style_loss Grams [[2]] vs [[0]], n=4");
  backbone::FeatureMap<double> f{"f", 1, 2, 1, 2, {1, 0}}, zero{"f", 1, 2, 1, 2, {0, 0}};
  c.near(ast::ast_content_term(f, zero, 2), 0.5, 1e-6, "ast_content_loss [1,0] vs [0,0], n=2");
  const auto model = tiny_model();
  const ast::AstTrainConfig acfg;
  const auto x = testutil::random_image(16, 16, rng), s = testutil::random_image(16, 16, rng);
  c.expect(ast::ast_style_loss(x, x, model, acfg.style_layers) == 0.0f, "ast_style_loss x=s");
  c.expect(ast::ast_content_loss(x, x, model, acfg.content_layers) == 0.0f, "ast_content_loss x=c");
  c.near(ast::ast_content_loss(x, s, model, acfg.content_layers), ast::ast_content_loss(s, x, model, acfg.content_layers),
         1e-6, "ast_content_loss symmetry");
  {
    std::vector<backbone::LayerSpec> spec{{"conv", backbone::LayerKind::conv3x3, 3, 4}};
    auto w = backbone::random_weights(spec, 11);
    WeightArchive w2;
    auto doubled = w.get("conv.weight");
    for (auto& v : doubled.data) v *= 2;
    w2.add("conv.weight", doubled);
    w2.add("conv.bias", w.get("conv.bias"));
    const auto m1 = backbone::load_weights<double>(w, spec), m2 = backbone::load_weights<double>(w2, spec);
    c.near(ast::ast_style_loss(x, s, m2, {"conv"}) / ast::ast_style_loss(x, s, m1, {"conv"}), 16.0, 1e-6,
           "ast_style_loss quartic homogeneity");
  }

  using cyclegan::adversarial_loss;
  c.expect(adversarial_loss(Tensor<double>({1, 4, 4}, 1.0), true) == 0.0, "adversarial_loss perfect real");
  c.expect(adversarial_loss(Tensor<double>({1, 4, 4}, 0.0), false) == 0.0, "adversarial_loss perfect fake");
  c.near(adversarial_loss(Tensor<double>({1, 4, 4}, 0.5), true), 0.25, 1e-6, "adversarial_loss 0.5 real");
  c.near(adversarial_loss(Tensor<double>({1, 4, 4}, 0.5), false), 0.25, 1e-6, "adversarial_loss 0.5 fake");

  using cyclegan::cycle_consistency_loss;
  c.expect(cycle_consistency_loss(x, x) == 0.0, "cycle_consistency_loss identity");
  c.near(cycle_consistency_loss(image::ImageTensor(4, 4, image::Range::unit, 0.0f),
                                image::ImageTensor(4, 4, image::Range::unit, 1.0f)),
         1.0, 1e-6, "cycle_consistency_loss 0 vs 1");
  c.expect(cycle_consistency_loss(x, s) == cycle_consistency_loss(s, x), "cycle_consistency_loss symmetry");

  using cyclegan::cyclegan_total_loss;
  c.expect(cyclegan_total_loss(0.7, 2.0, 0.0) == 0.7, "cyclegan_total_loss lambda=0");
  c.expect(cyclegan_total_loss(1.0, 2.0, 10.0) == 21.0, "cyclegan_total_loss arithmetic");
  c.expect(cyclegan_total_loss(1.5, 0.0, 123.0) == 1.5, "cyclegan_total_loss cycle=0");
}

// ------------------------------------------------------------ gradients

void gradient_checks(Check& c) {
  const image::PreprocessSpec spec;
  {
    const auto model = tiny_model(4).cast<double>();
    Rng rng(4);
    const auto cfg = gatys::GatysConfig::tiny_defaults();
    auto chw = [&](const image::ImageTensor& t) { return image::to_chw<double>(image::normalize(t, spec)); };
    const auto targets = gatys::make_targets(model, cfg, chw(testutil::random_image(16, 16, rng)),
                                             chw(testutil::random_image(16, 16, rng)));
    auto x = ag::Var<double>::parameter(chw(testutil::random_image(16, 16, rng)));
    auto f = [&] { return gatys::objective(model, cfg, targets, x).first; };
    const auto r = testutil::check_gradient_sampled(f, x, 20, rng, 1e-3);
    c.expect(r.checked >= 20, "gatys: fewer than 20 coordinates checked");
    c.expect(r.max_rel_error < 1e-3, "gatys pixel gradient rel error " + fmt(r.max_rel_error));
    c.note("gatys max rel " + fmt(r.max_rel_error) + " over " + std::to_string(r.checked) + " coords (" +
           std::to_string(r.skipped) + " kink resamples)");
  }
  {
    const auto model = tiny_model(12).cast<double>();
    ast::StylePredictor<double> p(4, 8, 24, 3);
    ast::TransferNetwork<double> net(4, 8, 4);
    const ast::AstTrainConfig cfg;
    const auto cc = image::to_chw<double>(testutil::pattern_image(16, 3));
    const auto ss = image::to_chw<double>(testutil::pattern_image(16, 4));
    auto f = [&] { return ast::ast_objective(p, net, model, cc, ss, cfg).first; };
    Rng rng(12);
    std::size_t checked = 0, zero_tensors = 0;
    double worst = 0;
    for (auto* params : {&p.params(), &net.params()})
      for (auto& [name, v] : *params) {
        // Conv biases feeding an instance-norm site get an identically zero
        // gradient; assert that instead of dividing noise by noise.
        if (params == &net.params() && name != "out.bias" && name.ends_with(".bias")) {
          v.zero_grad();
          ag::backward(f());
          for (double g : v.grad().data) c.expect(std::abs(g) < 1e-6, "ast: " + name + " gradient not zero");
          ++zero_tensors;
          continue;
        }
        const auto r = testutil::check_gradient_sampled(f, v, 2, rng, 1e-4);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
      }
    c.expect(checked >= 20, "ast: fewer than 20 coordinates checked");
    c.expect(worst < 1e-3, "ast parameter gradient rel error " + fmt(worst));
    c.note("ast max rel " + fmt(worst) + " over " + std::to_string(checked) + " coords, " +
           std::to_string(zero_tensors) + " bias tensors asserted zero");
  }
}

// ------------------------------------------------------------ gram

void gram_properties(Check& c) {
  Rng rng(7);
  double min_eig = 1e300;
  bool symmetric = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t C = 1 + rng.index(16), M = 1 + rng.index(64);
    backbone::FeatureMap<float> f{"f", C, M, 1, M, {}};
    for (std::size_t i = 0; i < C * M; ++i) f.data.push_back(static_cast<float>(rng.uniform(-2, 2)));
    const auto g = backbone::gram_matrix(f);
    Eigen::MatrixXd m(C, C);
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        symmetric = symmetric && g(i, j) == g(j, i);
        m(i, j) = g(i, j);
      }
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff());
  }
  c.expect(symmetric, "gram not exactly symmetric");
  c.expect(min_eig >= -1e-5, "min eigenvalue " + fmt(min_eig));
  c.note("min eigenvalue " + fmt(min_eig));
}

// ------------------------------------------------------------ gatys

void gatys_convergence(Check& c) {
  const image::PreprocessSpec spec;
  const auto model = tiny_model();
  Rng rng(1);
  const auto content = image::normalize(testutil::random_image(64, 64, rng), spec);
  const auto style = image::normalize(testutil::random_image(64, 64, rng), spec);
  auto cfg = gatys::GatysConfig::tiny_defaults();
  cfg.iterations = 50;
  cfg.step_size = 0.02;
  cfg.init = gatys::Init::noise;
  const auto trace = gatys::run_gatys(content, style, model, cfg).second;
  const double ratio = trace.losses.back().total / trace.losses.front().total;
  c.expect(ratio <= 0.2, "noise-init ratio " + fmt(ratio));
  c.note("final/initial " + fmt(ratio) + " (noise init)");
  cfg.init = gatys::Init::content_copy;
  const auto copy = gatys::run_gatys(content, style, model, cfg).second;
  c.note("content-copy init ratio " + fmt(copy.losses.back().total / copy.losses.front().total) + " (informational)");

  const auto img = testutil::random_image(64, 64, rng);
  const auto n = image::normalize(img, spec);
  cfg.iterations = 5;
  const auto [out, id] = gatys::run_gatys(n, n, model, cfg);
  c.expect(id.losses.front().total == 0.0, "identity initial loss " + fmt(id.losses.front().total));
  double worst = 0;
  for (std::size_t i = 0; i < out.data.size(); ++i) worst = std::max(worst, double(std::abs(out.data[i] - img.data[i])));
  c.expect(worst <= 1.0 / 255, "identity output deviation " + fmt(worst));
}

// ------------------------------------------------------------ ast

void ast_algebra(Check& c) {
  Rng rng(1);
  auto random_embedding = [&](std::size_t D) {
    ast::StyleEmbedding e;
    for (std::size_t i = 0; i < D; ++i) {
      e.gamma.push_back(static_cast<float>(rng.uniform(-2, 2)));
      e.beta.push_back(static_cast<float>(rng.uniform(-2, 2)));
    }
    return e;
  };
  auto max_diff = [](const ast::StyleEmbedding& a, const ast::StyleEmbedding& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.dimension(); ++i)
      d = std::max({d, double(std::abs(a.gamma[i] - b.gamma[i])), double(std::abs(a.beta[i] - b.beta[i]))});
    return d;
  };
  for (int t = 0; t < 50; ++t) {
    const auto a = random_embedding(48), b = random_embedding(48), d = random_embedding(48);
    c.expect(max_diff(ast::blend_embeddings({{{a, 1.0}}}), a) <= 1e-6, "blend single entry");
    c.expect(max_diff(ast::blend_embeddings({{{a, 0.5}, {a, 0.5}}}), a) <= 1e-6, "blend idempotence");
    c.expect(max_diff(ast::strength_blend(a, b, 0.0), a) <= 1e-6, "strength endpoint 0");
    c.expect(max_diff(ast::strength_blend(a, b, 1.0), b) <= 1e-6, "strength endpoint 1");
    const double w1 = rng.uniform(0.05, 0.9), w2 = rng.uniform(0.05, 1.0 - w1), w3 = 1.0 - w1 - w2;
    const auto flat = ast::blend_embeddings({{{a, w1}, {b, w2}, {d, w3}}});
    const auto inner = ast::blend_embeddings({{{a, w1 / (w1 + w2)}, {b, w2 / (w1 + w2)}}});
    const auto nested = ast::blend_embeddings({{{inner, w1 + w2}, {d, w3}}});
    c.expect(max_diff(flat, nested) <= 1e-6, "blend associativity " + fmt(max_diff(flat, nested)));
  }

  const auto model = tiny_model();
  ast::StylePredictor<float> p(8, 16, 48, 1);
  ast::TransferNetwork<float> net(8, 16, 2);
  std::vector<image::ImageTensor> C, S;
  for (int i = 0; i < 8; ++i) C.push_back(testutil::pattern_image(32, 100 + i));
  for (int i = 0; i < 4; ++i) S.push_back(testutil::pattern_image(32, 200 + i));
  ast::AstTrainConfig cfg;
  cfg.steps = 200;
  const double before = ast::ast_dataset_loss(p, net, C, S, model, cfg).total;
  const auto r = ast::train_ast(p, net, C, S, model, cfg);
  const double after = ast::ast_dataset_loss(r.predictor, r.net, C, S, model, cfg).total;
  c.expect(after <= 0.5 * before, "train_ast ratio " + fmt(after / before));
  c.note("combined loss " + fmt(before) + " -> " + fmt(after) + " (ratio " + fmt(after / before) + ")");
}

// ------------------------------------------------------------ cyclegan

void cyclegan_desk_scale(Check& c) {
  const auto X = testutil::shape_set(100, 32, true, 1), Y = testutil::shape_set(100, 32, false, 2);
  cyclegan::CycleGanConfig cfg;
  cfg.steps = 500;
  const auto r = cyclegan::train_cyclegan<float>(X, Y, cfg);
  double lead = 0, trail = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    lead += r.report[i].cycle / 50;
    trail += r.report[450 + i].cycle / 50;
  }
  c.expect(r.report.size() == 500, "report length");
  c.expect(trail <= 0.5 * lead, "cycle ratio " + fmt(trail / lead));
  c.note("cycle loss lead " + fmt(lead) + " trail " + fmt(trail) + " (ratio " + fmt(trail / lead) + ")");

  for (double adv : {0.25, 1.5, 3.0})
    for (double cyc : {0.5, 0.125, 2.0})
      for (double l : {0.0, 1.0, 4.0, 16.0}) {
        c.expect(cyclegan::cyclegan_total_loss(adv, cyc, l) - adv == l * cyc, "affine in lambda");
        c.expect(cyclegan::cyclegan_total_loss(adv, cyc, 2 * l) - cyclegan::cyclegan_total_loss(adv, cyc, l) ==
                     l * cyc,
                 "affine increment");
      }
}

// ------------------------------------------------------------ service

std::string png_bytes(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  const auto b = image::encode_image(testutil::random_image(side, side, rng), image::Format::png);
  return {b.begin(), b.end()};
}

void service_integration(Check& c) {
  using namespace service;
  ServiceConfig cfg;
  cfg.worker_count = 2;
  Service svc(cfg, engine::load_models(engine::EngineConfig{}), ModelRegistry::defaults());
  if (!svc.bind("127.0.0.1", 0)) return c.expect(false, "bind failed");
  std::thread loop([&] { svc.listen(); });
  while (!svc.http().is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const int port = svc.bound_port();

  auto post = [&](const std::string& model, const std::string& content, const std::string* style,
                  const std::string& params) {
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(300, 0);
    httplib::MultipartFormDataItems items{{"model", model, "", ""},
                                          {"content", content, "c.png", "image/png"},
                                          {"params", params, "", ""}};
    if (style) items.push_back({"style", *style, "s.png", "image/png"});
    return client.Post("/api/v1/jobs", items);
  };
  httplib::Client client("127.0.0.1", port);
  auto poll = [&](const std::string& id) {
    for (;;) {
      auto r = client.Get("/api/v1/jobs/" + id);
      if (!r || r->status != 200) return json{{"status", "HTTP error"}};
      auto doc = json::parse(r->body);
      if (doc["status"] == "DONE" || doc["status"] == "FAILED") return doc;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  };

  const auto content = png_bytes(64, 1), style = png_bytes(64, 2);
  for (const std::string model : {"gatys", "ast", "cyclegan"}) {
    auto r = post(model, content, model == "cyclegan" ? nullptr : &style,
                  model == "gatys" ? R"({"iterations": 10})" : "{}");
    if (!r || r->status != 202) {
      c.expect(false, model + ": submit failed");
      continue;
    }
    const auto doc = poll(json::parse(r->body)["job_id"]);
    c.expect(doc["status"] == "DONE", model + ": status " + doc.dump());
    if (doc["status"] != "DONE") continue;
    auto res = client.Get(doc["result_url"].get<std::string>());
    c.expect(res && res->get_header_value("Content-Type") == "image/png", model + ": content type");
    try {
      const auto img = image::decode_image(
          std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(res->body.data()), res->body.size()));
      c.expect(img.width == 64 && img.height == 64, model + ": result dimensions");
    } catch (const Error& e) {
      c.expect(false, model + ": result is not a valid PNG: " + e.what());
    }
  }

  auto bad = post("picasso9000", content, &style, "{}");
  c.expect(bad && bad->status == 404 && json::parse(bad->body) == json{{"error", "unknown model"}}, "unknown model 404");
  const std::string huge(12 * 1024 * 1024, 'x');
  auto big = post("gatys", huge, &style, "{}");
  c.expect(big && big->status == 413, "oversized payload 413");

  std::vector<std::string> ids(10);
  std::vector<std::thread> threads;
  for (int i = 0; i < 10; ++i)
    threads.emplace_back([&, i] {
      auto r = post("gatys", content, &style, R"({"iterations": 5})");
      if (r && r->status == 202) ids[i] = json::parse(r->body)["job_id"];
    });
  for (auto& t : threads) t.join();
  std::size_t terminal = 0;
  for (const auto& id : ids)
    if (!id.empty()) {
      const auto s = poll(id)["status"];
      terminal += s == "DONE" || s == "FAILED";
    }
  c.expect(std::set<std::string>(ids.begin(), ids.end()).size() == 10, "10 distinct job ids");
  c.expect(terminal == 10, std::to_string(terminal) + "/10 jobs terminal");
  c.expect(svc.peak_running() <= 2, "peak RUNNING " + std::to_string(svc.peak_running()));
  c.note("peak RUNNING " + std::to_string(svc.peak_running()) + " with 2 workers");
  svc.stop();
  loop.join();
}

// ------------------------------------------------------------ cli

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void cli_determinism(Check& c) {
  testutil::TempDir dir("acceptance");
  std::ofstream(dir.path / "c.png", std::ios::binary) << png_bytes(48, 3);
  std::ofstream(dir.path / "s.png", std::ios::binary) << png_bytes(48, 4);
  const std::string content = (dir.path / "c.png").string(), style = (dir.path / "s.png").string();
  for (const std::string model : {"gatys", "ast", "cyclegan"}) {
    std::string args = "stylize --model " + model + " --content " + content + " --seed 7";
    if (model != "cyclegan") args += " --style " + style;
    if (model == "gatys") args += " --iterations 10";
    std::vector<std::string> outputs;
    for (const char* name : {"a.png", "b.png"}) {
      const auto out = dir.path / (model + name);
      const std::string cmd = std::string(LIVESTYLE_CLI) + " " + args + " --out " + out.string() + " >/dev/null";
      const int status = std::system(cmd.c_str());
      c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, model + ": cli exit status " + std::to_string(status));
      outputs.push_back(slurp(out));
    }
    c.expect(!outputs[0].empty() && outputs[0] == outputs[1], model + ": outputs differ");
  }
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"loss-formula oracle suite", 5, loss_formulas},
      {"gradient checks", 60, gradient_checks},
      {"gram properties", 30, gram_properties},
      {"gatys convergence", 120, gatys_convergence},
      {"ast algebra and training", 180, ast_algebra},
      {"cyclegan desk scale", 300, cyclegan_desk_scale},
      {"service integration", 300, service_integration},
      {"cli determinism", 120, cli_determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    check.expect(secs < cr.budget_seconds, "runtime " + fmt(secs) + " s over budget " + fmt(cr.budget_seconds) + " s");
    const bool ok = check.failures().empty();
    failed += !ok;
    std::printf("%s  %-28s %7.2f s  (%zu checks)\n", ok ? "PASS" : "FAIL", cr.name, secs, check.checks());
    for (const auto& n : check.notes()) std::printf("        %s\n", n.c_str());
    for (const auto& f : check.failures()) std::printf("        failed: %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
