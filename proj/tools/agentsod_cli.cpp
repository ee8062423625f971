// agentsod command-line tool: inference, evaluation, gradient check,
// attention scaling benchmark, weight initialization and a toggle self-test.
//
// Exit codes: 0 success, 1 I/O or validation failure, 2 check failure.

#include "agentsod/harness.hpp"
#include "agentsod/io.hpp"
#include "agentsod/metrics.hpp"
#include "agentsod/model.hpp"
#include "agentsod/rng.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace agentsod;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitCheck = 2;

// Grayscale PGM -> 3 x input x input image tensor.
Tensor load_input_image(const std::string& path, int input_size) {
  const Tensor gray = image_to_tensor(read_pgm(path));
  Tensor plane = gray.reshaped({1, gray.dim(0), gray.dim(1)});
  plane = bilinear_resize(plane, input_size, input_size);
  return concat_rows({plane.reshaped({1, input_size * input_size}), plane.reshaped({1, input_size * input_size}),
                      plane.reshaped({1, input_size * input_size})})
      .reshaped({3, input_size, input_size});
}

struct InferOptions {
  std::string image;
  std::string weights;
  std::string out;
  bool no_fia = false;
  bool no_ccm = false;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

int cmd_infer(const InferOptions& o) {
  ModelConfig config;
  config.fia_enabled = !o.no_fia;
  config.ccm_enabled = !o.no_ccm;
  if (o.weights.empty() && !o.seed) {
    std::cerr << "infer: either --weights or --seed is required\n";
    return kExitIo;
  }
  if (o.threads < 1) {
    std::cerr << "infer: --threads must be positive\n";
    return kExitIo;
  }
  ModelParams params;
  if (!o.weights.empty()) {
    params = load_params(o.weights, config);
  } else {
    config.seed = *o.seed;
    params = init_model(config);
  }
  const Tensor image = load_input_image(o.image, config.input_size);
  const Tensor saliency = model_forward(image, params, config, o.threads);
  write_pgm(o.out, tensor_to_image(saliency));
  return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out, int threads) {
  const MetricsReport report = evaluate_dataset(pred, gt, threads);
  write_report_csv(out, report);
  std::cout << report_csv(report);
  return kExitOk;
}

int cmd_gradcheck(double tolerance) {
  if (!(tolerance >= 0.0)) {
    std::cerr << "gradcheck: tolerance must be non-negative\n";
    return kExitIo;
  }
  const auto results = run_gradcheck({11, 23, 37});
  int status = kExitOk;
  for (const auto& r : results) {
    const bool ok = r.max_relative_error <= tolerance;
    std::cout << r.block << " max_rel_error=" << std::scientific << std::setprecision(3) << r.max_relative_error
              << " tensors=" << r.tensors_checked << (ok ? " ok" : " FAIL") << '\n';
    if (!ok) {
      std::cerr << "gradcheck: block " << r.block << " exceeds tolerance " << tolerance << '\n';
      status = kExitCheck;
    }
  }
  return status;
}

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad size '" + item + "'");
    sizes.push_back(v);
  }
  return sizes;
}

int cmd_bench(const std::string& sizes_text, int repeats) {
  const BenchResult result = run_bench(parse_sizes(sizes_text), repeats);
  if (result.resolution_warning) std::cerr << "bench: warning: timings are close to the timer resolution\n";
  std::cout << "tokens,kernel,median_seconds\n";
  std::cout << std::setprecision(9);
  for (const auto& row : result.rows) std::cout << row.tokens << ',' << row.kernel << ',' << row.median_seconds << '\n';
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "# slope full=" << result.full_slope << '\n';
  std::cout << "# slope agent=" << result.agent_slope << '\n';
  return kExitOk;
}

int cmd_init(std::uint64_t seed, const std::string& out) {
  ModelConfig config;
  config.seed = seed;
  ModelParams params = init_model(config);
  save_params(out, params);
  return kExitOk;
}

// Runs the four interaction/calibration toggle combinations on a seeded
// random image and checks the output contract.
int cmd_selftest(std::uint64_t seed) {
  ModelConfig config;
  config.seed = seed;
  const ModelParams params = init_model(config);
  SplitMix64 rng(seed + 1);
  Tensor image({3, config.input_size, config.input_size});
  for (float& v : image.data()) v = rng.uniform01();
  int status = kExitOk;
  for (int mask = 0; mask < 4; ++mask) {
    config.fia_enabled = (mask & 1) != 0;
    config.ccm_enabled = (mask & 2) != 0;
    const Tensor s = model_forward(image, params, config);
    bool ok = s.shape() == Shape{1, config.input_size, config.input_size};
    for (float v : s.data()) ok = ok && v >= 0.0f && v <= 1.0f;
    std::cout << "fia=" << config.fia_enabled << " ccm=" << config.ccm_enabled << " mean=" << std::fixed
              << std::setprecision(6) << mean(s) << (ok ? " ok" : " FAIL") << '\n';
    if (!ok) status = kExitCheck;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agent-attention saliency toolkit"};
  app.require_subcommand(1);

  InferOptions infer;
  std::uint64_t infer_seed = 0;
  auto* infer_cmd = app.add_subcommand("infer", "Run the network on a PGM image");
  infer_cmd->add_option("--image", infer.image, "Input PGM")->required();
  infer_cmd->add_option("--weights", infer.weights, "Weights directory");
  infer_cmd->add_option("--out", infer.out, "Output PGM")->required();
  infer_cmd->add_flag("--no-fia", infer.no_fia, "Disable feature interaction");
  infer_cmd->add_flag("--no-ccm", infer.no_ccm, "Disable calibration");
  auto* seed_opt = infer_cmd->add_option("--seed", infer_seed, "Initialize fresh weights from this seed");
  infer_cmd->add_option("--threads", infer.threads, "Worker threads for per-level evaluation");

  std::string pred_dir;
  std::string gt_dir;
  std::string eval_out;
  int eval_threads = 1;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against masks");
  eval_cmd->add_option("--pred", pred_dir, "Prediction directory")->required();
  eval_cmd->add_option("--gt", gt_dir, "Ground-truth directory")->required();
  eval_cmd->add_option("--out", eval_out, "Output CSV")->required();
  eval_cmd->add_option("--threads", eval_threads, "Worker threads");

  double tolerance = 1e-2;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--tolerance", tolerance, "Maximum relative error");

  std::string sizes = "196,784,3136";
  int repeats = 5;
  auto* bench_cmd = app.add_subcommand("bench", "Time full vs agent attention");
  bench_cmd->add_option("--sizes", sizes, "Comma-separated token counts");
  bench_cmd->add_option("--repeats", repeats, "Repeats per size");

  std::uint64_t init_seed = 0;
  std::string init_out;
  auto* init_cmd = app.add_subcommand("init", "Write freshly initialized weights");
  init_cmd->add_option("--seed", init_seed, "PRNG seed")->required();
  init_cmd->add_option("--out", init_out, "Weights directory")->required();

  std::uint64_t selftest_seed = 1;
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the toggle matrix on a random image");
  selftest_cmd->add_option("--seed", selftest_seed, "PRNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitIo;
  }

  try {
    if (*infer_cmd) {
      if (*seed_opt) infer.seed = infer_seed;
      return cmd_infer(infer);
    }
    if (*eval_cmd) return cmd_eval(pred_dir, gt_dir, eval_out, eval_threads);
    if (*grad_cmd) return cmd_gradcheck(tolerance);
    if (*bench_cmd) return cmd_bench(sizes, repeats);
    if (*init_cmd) return cmd_init(init_seed, init_out);
    if (*selftest_cmd) return cmd_selftest(selftest_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitIo;
}
