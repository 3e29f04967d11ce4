#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pbq/error.hpp"
#include "pbq/hessian.hpp"
#include "pbq/pbgptq.hpp"
#include "pbq/pbmatrix.hpp"
#include "pbq/qat.hpp"
#include "pbq/tensorio.hpp"

namespace pbq::cli {
namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace {

json report_json(const QuantReport &r) {
  return json{{"name", r.name},
              {"frobenius_error", r.frobenius_error},
              {"relative_error", r.relative_error},
              {"bits_per_weight", r.bits_per_weight},
              {"salient_count", r.salient_count},
              {"seconds", r.seconds},
              {"clamped_salient", r.clamped_salient}};
}

struct LayerInput {
  std::string name;
  DenseMatrix weight;
  DenseMatrix acts;
};

constexpr std::string_view kWeightSuffix = ".weight";
constexpr std::string_view kActsSuffix = ".acts";

std::vector<LayerInput> load_layers(const fs::path &model_path, const fs::path &acts_path) {
  const TensorContainer model = read_container(model_path);
  const TensorContainer acts =
      fs::equivalent(model_path, acts_path) ? model : read_container(acts_path);
  std::vector<LayerInput> layers;
  for (const auto &t : model.entries()) {
    if (t.name.size() <= kWeightSuffix.size() || !t.name.ends_with(kWeightSuffix)) continue;
    const std::string layer = t.name.substr(0, t.name.size() - kWeightSuffix.size());
    const Tensor *a = acts.find(layer + std::string(kActsSuffix));
    if (a == nullptr) throw Error("layer '" + layer + "': missing tensor '" + layer + ".acts'");
    LayerInput in{layer, {}, {}};
    try {
      in.weight = as_matrix(t);
      in.acts = as_matrix(*a);
    } catch (const Error &e) {
      throw Error("layer '" + layer + "': " + e.what());
    }
    if (in.acts.rows() != in.weight.cols())
      throw Error("layer '" + layer + "': weight has " + std::to_string(in.weight.cols()) +
                  " input features but activations have " + std::to_string(in.acts.rows()) +
                  " rows");
    layers.push_back(std::move(in));
  }
  if (layers.empty())
    throw Error("no '<layer>.weight' tensors found in '" + model_path.string() + "'");
  return layers;
}

fs::path layer_file(const fs::path &dir, const std::string &layer) {
  return dir / (layer + ".pbtc");
}

struct QuantizeOptions {
  std::string model, acts, out_dir, report;
  std::string method = "pbgptq";
  std::string criterion = "magnitude";
  std::string granularity = "element";
  double fraction = 0.1;
  std::size_t group_size = 0;
  unsigned salient_bits = 8;
  double damping = 0.01;
  bool refit = false;
  unsigned jobs = 1;
};

int cmd_quantize(const QuantizeOptions &o, std::ostream &out, std::ostream &err) {
  QuantConfig cfg;
  cfg.salient_fraction = o.fraction;
  cfg.criterion = o.criterion == "hessian" ? Criterion::hessian : Criterion::magnitude;
  cfg.granularity = o.granularity == "column" ? Granularity::column : Granularity::element;
  cfg.group_size = o.group_size;
  cfg.salient_bits = o.salient_bits;
  cfg.damping_fraction = o.damping;
  cfg.refit_groups = o.refit;
  cfg.validate();

  const auto layers = load_layers(o.model, o.acts);
  std::vector<std::optional<PBMatrix>> results(layers.size());
  std::vector<QuantReport> reports(layers.size());
  std::vector<std::string> failures(layers.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < layers.size();) {
      const auto &l = layers[i];
      try {
        const auto start = std::chrono::steady_clock::now();
        HessianState hs(l.weight.cols(), cfg.damping_fraction);
        hs.accumulate(l.acts);
        PBMatrix pb;
        QuantReport rep;
        if (o.method == "pbgptq") {
          auto res = pbgptq_quantize(l.weight, hs, cfg);
          pb = std::move(res.matrix);
          rep.clamped_salient = res.report.clamped_salient;
        } else if (cfg.criterion == Criterion::hessian) {
          const HessianInverse inv = hs.finalize(cfg.damping_fraction);
          pb = rtn_quantize(l.weight, &inv.hinv, cfg);
        } else {
          pb = rtn_quantize(l.weight, nullptr, cfg);
        }
        const QuantReport ev = evaluate(l.weight, pb, l.acts);
        rep.frobenius_error = ev.frobenius_error;
        rep.relative_error = ev.relative_error;
        rep.bits_per_weight = ev.bits_per_weight;
        rep.salient_count = ev.salient_count;
        rep.name = l.name;
        rep.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        reports[i] = rep;
        results[i] = std::move(pb);
      } catch (const std::exception &e) {
        failures[i] = "layer '" + l.name + "': " + e.what();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(o.jobs, layers.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();

  for (const auto &f : failures)
    if (!f.empty()) throw Error(f);

  fs::create_directories(o.out_dir);
  for (std::size_t i = 0; i < layers.size(); ++i)
    write_container(pack(*results[i]), layer_file(o.out_dir, layers[i].name));

  std::string lines;
  for (const auto &r : reports) lines += report_json(r).dump() + "\n";
  if (o.report.empty() || o.report == "-") {
    out << lines;
  } else {
    std::ofstream f(o.report, std::ios::trunc);
    if (!f) throw IoError("cannot write report '" + o.report + "'");
    f << lines;
  }
  for (const auto &r : reports)
    err << r.name << ": relative error " << r.relative_error << ", " << r.bits_per_weight
        << " bits/weight, " << r.salient_count << " salient\n";
  return 0;
}

int cmd_eval(const std::string &model, const std::string &acts, const std::string &dir,
             std::ostream &out) {
  for (const auto &l : load_layers(model, acts)) {
    const auto file = layer_file(dir, l.name);
    PBMatrix pb;
    try {
      pb = unpack(read_container(file));
    } catch (const Error &e) {
      throw Error("layer '" + l.name + "': " + e.what());
    }
    QuantReport r = evaluate(l.weight, pb, l.acts);
    r.name = l.name;
    out << json{{"name", r.name},
                {"frobenius_error", r.frobenius_error},
                {"relative_error", r.relative_error},
                {"bits_per_weight", r.bits_per_weight},
                {"salient_count", r.salient_count}}
               .dump()
        << "\n";
  }
  return 0;
}

json summary(std::span<const double> v) {
  if (v.empty()) return json{{"min", 0.0}, {"mean", 0.0}, {"max", 0.0}};
  double sum = 0.0;
  for (double x : v) sum += x;
  return json{{"min", *std::min_element(v.begin(), v.end())},
              {"mean", sum / static_cast<double>(v.size())},
              {"max", *std::max_element(v.begin(), v.end())}};
}

int cmd_inspect(const std::string &path, std::ostream &out) {
  const TensorContainer c = read_container(path);
  const PBMatrix pb = unpack(c);
  const MaskStats st = mask_stats(pb.mask());
  const double n = static_cast<double>(pb.rows() * pb.cols());
  const auto budget = bit_budget(pb.binary_ratio(), pb.salient_bits());
  std::vector<double> col_counts(st.per_column.begin(), st.per_column.end());
  json j{{"rows", pb.rows()},
         {"cols", pb.cols()},
         {"group_size", pb.group_size()},
         {"salient_bits", pb.salient_bits()},
         {"salient_count", st.count},
         {"salient_fraction", st.fraction},
         {"bits_per_weight", budget.total_bits},
         {"payload_bits_per_weight",
          n == 0 ? 0.0 : static_cast<double>(packed_payload_bytes(c)) * 8.0 / n},
         {"storage_bits_per_weight", n == 0 ? 0.0 : static_cast<double>(storage_bits(pb)) / n},
         {"salient_per_column", summary(col_counts)},
         {"alpha", summary(pb.params().alpha)},
         {"mu", summary(pb.params().mu)}};
  out << j.dump() << "\n";
  return 0;
}

int cmd_qat_demo(const qat::TrainConfig &cfg, const std::string &csv_path, std::ostream &out,
                 std::ostream &err) {
  const auto records = qat::train_demo(cfg);
  std::string csv = "step,loss,alpha_mean\n";
  for (const auto &r : records) {
    double mean = 0.0;
    for (double a : r.alpha_snapshot) mean += a;
    if (!r.alpha_snapshot.empty()) mean /= static_cast<double>(r.alpha_snapshot.size());
    csv += std::to_string(r.step) + "," + format_number(r.loss) + "," + format_number(mean) +
           "\n";
  }
  if (csv_path.empty() || csv_path == "-") {
    out << csv;
  } else {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + csv_path + "'");
    f << csv;
  }
  err << "initial loss " << records.front().loss << ", final loss " << records.back().loss
      << "\n";
  return 0;
}

std::uint64_t default_seed() {
  if (const char *s = std::getenv("PBQ_SEED")) {
    std::uint64_t v = 0;
    const std::string_view sv(s);
    auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (ec != std::errc() || ptr != sv.data() + sv.size())
      throw InvalidArgument("PBQ_SEED must be an unsigned integer");
    return v;
  }
  return 0;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Partial-binarization weight quantizer", "pbq"};
  app.require_subcommand(1);
  app.allow_extras(false);

  double ratio = 0.9;
  unsigned budget_bits = 8;
  bool sweep = false;
  auto *budget = app.add_subcommand("budget", "Bits per weight for a binary ratio");
  budget->add_option("--ratio", ratio, "Fraction of binarized weights")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  budget->add_option("--salient-bits", budget_bits, "Bits per salient weight")
      ->check(CLI::Range(1u, 64u));
  budget->add_flag("--sweep", sweep, "Also print the budget over a ratio sweep");

  QuantizeOptions q;
  auto *quant = app.add_subcommand("quantize", "Quantize every layer of a model container");
  quant->add_option("--model", q.model, "PBTC with <layer>.weight tensors")
      ->required()
      ->check(CLI::ExistingFile);
  quant->add_option("--acts", q.acts, "PBTC with <layer>.acts tensors (defaults to --model)")
      ->check(CLI::ExistingFile);
  quant->add_option("--out", q.out_dir, "Output directory, one <layer>.pbtc per layer")
      ->required();
  quant->add_option("--report", q.report, "JSON-lines report path (default: stdout)");
  quant->add_option("--method", q.method)->check(CLI::IsMember({"rtn", "pbgptq"}));
  quant->add_option("--criterion", q.criterion)->check(CLI::IsMember({"magnitude", "hessian"}));
  quant->add_option("--granularity", q.granularity)->check(CLI::IsMember({"element", "column"}));
  quant->add_option("--fraction", q.fraction, "Salient fraction")->check(CLI::Range(0.0, 1.0));
  quant->add_option("--group-size", q.group_size, "Columns per group (0: whole row)");
  quant->add_option("--salient-bits", q.salient_bits)->check(CLI::Range(1u, 8u));
  quant->add_option("--damping", q.damping, "Hessian damping fraction")
      ->check(CLI::NonNegativeNumber);
  quant->add_flag("--refit", q.refit, "Re-fit group scales on compensated weights");
  quant->add_option("--jobs", q.jobs, "Layers quantized in parallel")->check(CLI::PositiveNumber);

  std::string ev_model, ev_acts, ev_dir;
  auto *eval = app.add_subcommand("eval", "Layer output errors of quantized layers");
  eval->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  eval->add_option("--acts", ev_acts)->check(CLI::ExistingFile);
  eval->add_option("--quantized", ev_dir, "Directory written by quantize")
      ->required()
      ->check(CLI::ExistingDirectory);

  std::string inspect_path;
  auto *inspect = app.add_subcommand("inspect", "Summarize a quantized layer file");
  inspect->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);

  qat::TrainConfig tc;
  std::optional<std::uint64_t> seed;
  std::string csv_path;
  bool no_zero_point = false;
  auto *demo = app.add_subcommand("qat-demo", "Train the small partially-binarized network");
  demo->add_option("--fraction", tc.salient_fraction)->check(CLI::Range(0.0, 1.0));
  demo->add_option("--steps", tc.steps);
  demo->add_option("--seed", seed, "Defaults to $PBQ_SEED, else 0");
  demo->add_option("--lr", tc.learning_rate)->check(CLI::PositiveNumber);
  demo->add_option("--group-size", tc.group_size);
  demo->add_option("--clip", tc.clip)->check(CLI::PositiveNumber);
  demo->add_flag("--no-zero-point", no_zero_point);
  bool constant_scales = false;
  demo->add_flag("--constant-scales", constant_scales,
                 "Treat mu and alpha as constants in the backward pass");
  demo->add_option("--out", csv_path, "CSV path (default: stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (*budget) {
      out << format_number(bit_budget(ratio, budget_bits).total_bits) << "\n";
      if (sweep) {
        out << "r_binary,total_bits\n";
        for (int i = 0; i <= 20; ++i) {
          const double r = i / 20.0;
          out << format_number(r) << "," << format_number(bit_budget(r, budget_bits).total_bits)
              << "\n";
        }
      }
      return 0;
    }
    if (*quant) {
      if (q.acts.empty()) q.acts = q.model;
      return cmd_quantize(q, out, err);
    }
    if (*eval) return cmd_eval(ev_model, ev_acts.empty() ? ev_model : ev_acts, ev_dir, out);
    if (*inspect) return cmd_inspect(inspect_path, out);
    if (*demo) {
      tc.seed = seed ? *seed : default_seed();
      tc.use_zero_point = !no_zero_point;
      tc.grad_through_scales = !constant_scales;
      return cmd_qat_demo(tc, csv_path, out, err);
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

} // namespace pbq::cli
