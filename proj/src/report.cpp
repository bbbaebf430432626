#include "llb/report.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "llb/errors.hpp"

namespace llb {

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

double to_double(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

std::optional<double> to_optional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::vector<double> to_doubles(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(to_double(x));
  return v;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      std::string list;
      for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      throw ConfigError(path + "." + key + ": unknown key (expected one of: " + list + ")");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& field, const std::string& path) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  const std::string where = path + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
    field = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a nonnegative integer");
    field = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    field = v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    field = v.get<std::string>();
  } else {
    // vectors of numbers
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    T out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      typename T::value_type x{};
      json wrap = {{"v", v[i]}};
      read(wrap, "v", x, where + "[" + std::to_string(i) + "]");
      out.push_back(x);
    }
    field = std::move(out);
  }
}

json to_json(const SplitStreamOptions& s) {
  return {{"num_classes", s.num_classes},         {"classes_per_task", s.classes_per_task},
          {"attributes", s.attributes},           {"input_dim", s.input_dim},
          {"with_replacement", s.with_replacement}, {"train_per_class", s.train_per_class},
          {"test_per_class", s.test_per_class},   {"noise", s.noise}};
}

json to_json(const MeanStd& m) { return {{"mean", num(m.mean)}, {"std", num(m.std)}, {"n", m.n}}; }

std::string csv_num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_num(const std::optional<double>& v) { return v ? csv_num(*v) : ""; }

std::string pm(const MeanStd& m) {
  if (m.n == 0) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f +- %.4f", m.mean, m.std);
  return buf;
}

}  // namespace

json to_json(const HyperParams& hp) {
  return {{"lr", hp.lr},
          {"lambda", hp.lambda},
          {"memory_per_task", hp.memory_per_task},
          {"ref_batch_size", hp.ref_batch_size},
          {"batch_size", hp.batch_size},
          {"epochs", hp.epochs},
          {"beta", hp.beta},
          {"fisher_samples", hp.fisher_samples},
          {"study_mode", hp.study_mode}};
}

json to_json(const ExperimentConfig& c) {
  return {{"stream",
           {{"kind", c.stream.kind},
            {"tasks", c.stream.tasks},
            {"cv_tasks", c.stream.cv_tasks},
            {"train_per_task", c.stream.train_per_task},
            {"test_per_task", c.stream.test_per_task},
            {"data_dir", c.stream.data_dir},
            {"split", to_json(c.stream.split)}}},
          {"learner", c.learner},
          {"hidden", c.hidden},
          {"hparams", to_json(c.hparams)},
          {"grid", {{"lr", c.grid.lr}, {"lambda", c.grid.lambda}}},
          {"seeds", c.seeds},
          {"out_dir", c.out_dir},
          {"jobs", c.jobs}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  const std::string root = "config";
  check_keys(j, {"stream", "learner", "hidden", "hparams", "grid", "seeds", "out_dir", "jobs"}, root);
  if (j.contains("stream")) {
    const json& s = j.at("stream");
    const std::string p = root + ".stream";
    check_keys(s, {"kind", "tasks", "cv_tasks", "train_per_task", "test_per_task", "data_dir", "split"}, p);
    read(s, "kind", c.stream.kind, p);
    read(s, "tasks", c.stream.tasks, p);
    read(s, "cv_tasks", c.stream.cv_tasks, p);
    read(s, "train_per_task", c.stream.train_per_task, p);
    read(s, "test_per_task", c.stream.test_per_task, p);
    read(s, "data_dir", c.stream.data_dir, p);
    if (s.contains("split")) {
      const json& sp = s.at("split");
      const std::string q = p + ".split";
      check_keys(sp, {"num_classes", "classes_per_task", "attributes", "input_dim", "with_replacement",
                      "train_per_class", "test_per_class", "noise"},
                 q);
      auto& o = c.stream.split;
      read(sp, "num_classes", o.num_classes, q);
      read(sp, "classes_per_task", o.classes_per_task, q);
      read(sp, "attributes", o.attributes, q);
      read(sp, "input_dim", o.input_dim, q);
      read(sp, "with_replacement", o.with_replacement, q);
      read(sp, "train_per_class", o.train_per_class, q);
      read(sp, "test_per_class", o.test_per_class, q);
      read(sp, "noise", o.noise, q);
    }
  }
  // The split generator reads its task counts from the stream section.
  c.stream.split.tasks = c.stream.tasks;
  c.stream.split.cv_tasks = c.stream.cv_tasks;
  read(j, "learner", c.learner, root);
  read(j, "hidden", c.hidden, root);
  if (j.contains("hparams")) {
    const json& h = j.at("hparams");
    const std::string p = root + ".hparams";
    check_keys(h, {"lr", "lambda", "memory_per_task", "ref_batch_size", "batch_size", "epochs", "beta",
                   "fisher_samples", "study_mode"},
               p);
    read(h, "lr", c.hparams.lr, p);
    read(h, "lambda", c.hparams.lambda, p);
    read(h, "memory_per_task", c.hparams.memory_per_task, p);
    read(h, "ref_batch_size", c.hparams.ref_batch_size, p);
    read(h, "batch_size", c.hparams.batch_size, p);
    read(h, "epochs", c.hparams.epochs, p);
    read(h, "beta", c.hparams.beta, p);
    read(h, "fisher_samples", c.hparams.fisher_samples, p);
    read(h, "study_mode", c.hparams.study_mode, p);
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, {"lr", "lambda"}, root + ".grid");
    read(g, "lr", c.grid.lr, root + ".grid");
    read(g, "lambda", c.grid.lambda, root + ".grid");
  }
  read(j, "seeds", c.seeds, root);
  read(j, "out_dir", c.out_dir, root);
  read(j, "jobs", c.jobs, root);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const json& config) {
  const std::string body = config.dump();
  const std::string blob = "blob " + std::to_string(body.size()) + '\0' + body;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

json to_json(const MetricsReport& r) {
  json b_shot = json::array();
  for (const auto& curve : r.b_shot) b_shot.push_back(nums(curve));
  return {{"learner", r.learner},
          {"seed", r.seed},
          {"hparams", to_json(r.hparams)},
          {"cv_scores", nums(r.cv_scores)},
          {"A_T", num(r.avg_accuracy)},
          {"F_T", num(r.forgetting)},
          {"F_wst_test", num(r.worst_forgetting_test)},
          {"F_wst_mem", num(r.worst_forgetting_memory)},
          {"LCA", num(r.lca)},
          {"beta", r.beta},
          {"Z", nums(r.z_curve)},
          {"b_shot", b_shot},
          {"zero_shot", nums(r.zero_shot)},
          {"final_accuracies", nums(r.final_accuracies)},
          {"violations", r.violations},
          {"violations_at_boundary", r.violations_at_boundary},
          {"mean_step_seconds", num(r.mean_step_seconds)},
          {"task_step_seconds", nums(r.task_step_seconds)},
          {"params", r.parameters},
          {"audit",
           {{"single_pass", r.audit.single_pass},
            {"isolation", r.audit.isolation},
            {"reset", r.audit.reset},
            {"detail", r.audit.detail}}}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.learner = j.at("learner").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  json cfg = {{"hparams", j.at("hparams")}};
  r.hparams = config_from_json(cfg).hparams;
  r.cv_scores = to_doubles(j.at("cv_scores"));
  r.avg_accuracy = to_double(j.at("A_T"));
  r.forgetting = to_optional(j.at("F_T"));
  r.worst_forgetting_test = to_optional(j.at("F_wst_test"));
  r.worst_forgetting_memory = to_optional(j.at("F_wst_mem"));
  r.lca = to_optional(j.at("LCA"));
  r.beta = j.at("beta").get<std::size_t>();
  r.z_curve = to_doubles(j.at("Z"));
  for (const auto& c : j.at("b_shot")) r.b_shot.push_back(to_doubles(c));
  r.zero_shot = to_doubles(j.at("zero_shot"));
  r.final_accuracies = to_doubles(j.at("final_accuracies"));
  r.violations = j.at("violations").get<std::uint64_t>();
  r.violations_at_boundary = j.at("violations_at_boundary").get<std::vector<std::uint64_t>>();
  r.mean_step_seconds = to_double(j.at("mean_step_seconds"));
  r.task_step_seconds = to_doubles(j.at("task_step_seconds"));
  r.parameters = j.at("params").get<std::size_t>();
  const json& a = j.at("audit");
  r.audit.single_pass = a.at("single_pass").get<bool>();
  r.audit.isolation = a.at("isolation").get<bool>();
  r.audit.reset = a.at("reset").get<bool>();
  r.audit.detail = a.at("detail").get<std::string>();
  return r;
}

json to_json(const AggregateReport& a) {
  return {{"learner", a.learner},
          {"A_T", to_json(a.avg_accuracy)},
          {"F_T", to_json(a.forgetting)},
          {"LCA", to_json(a.lca)},
          {"F_wst_test", to_json(a.worst_forgetting_test)},
          {"F_wst_mem", to_json(a.worst_forgetting_memory)},
          {"mean_step_seconds", to_json(a.mean_step_seconds)},
          {"violations", to_json(a.violations)}};
}

std::string summary_csv(const std::vector<MetricsReport>& reports, bool header) {
  std::ostringstream os;
  if (header) os << kSummaryCsvHeader << '\n';
  for (const auto& r : reports)
    os << r.learner << ',' << r.seed << ',' << csv_num(r.avg_accuracy) << ',' << csv_num(r.forgetting) << ','
       << csv_num(r.lca) << ',' << csv_num(r.worst_forgetting_test) << ',' << csv_num(r.worst_forgetting_memory)
       << ',' << r.violations << ',' << csv_num(r.mean_step_seconds) << ',' << r.parameters << '\n';
  return os.str();
}

std::string curve_csv(const std::vector<MetricsReport>& reports, bool header) {
  std::ostringstream os;
  if (header) os << "learner,seed,task,b,accuracy\n";
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.b_shot.size(); ++k)
      for (std::size_t b = 0; b < r.b_shot[k].size(); ++b)
        os << r.learner << ',' << r.seed << ',' << k << ',' << b << ',' << csv_num(r.b_shot[k][b]) << '\n';
  return os.str();
}

std::string zero_shot_csv(const std::vector<MetricsReport>& reports, bool header) {
  std::ostringstream os;
  if (header) os << "learner,seed,task,accuracy\n";
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.zero_shot.size(); ++k)
      os << r.learner << ',' << r.seed << ',' << k << ',' << csv_num(r.zero_shot[k]) << '\n';
  return os.str();
}

std::string compare_table(const std::vector<AggregateReport>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "learner" << std::setw(20) << "A_T" << std::setw(20) << "F_T"
     << std::setw(20) << "LCA" << std::setw(20) << "F_wst_test" << std::setw(22) << "step_seconds"
     << "violations\n";
  for (const auto& a : rows) {
    char step[64];
    std::snprintf(step, sizeof step, "%.3e", a.mean_step_seconds.mean);
    os << std::setw(12) << a.learner << std::setw(20) << pm(a.avg_accuracy) << std::setw(20) << pm(a.forgetting)
       << std::setw(20) << pm(a.lca) << std::setw(20) << pm(a.worst_forgetting_test) << std::setw(22) << step
       << csv_num(a.violations.mean) << '\n';
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

WrittenFiles emit_report(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  const json config = to_json(result.config);
  const std::string hash = config_hash(config);
  WrittenFiles files{dir / "report.json", dir / "summary.csv", dir / "curves.csv", dir / "zero_shot.csv",
                     dir / "manifest.json"};

  json seeds = json::array();
  json seed_files = json::array();
  for (const auto& r : result.reports) {
    seeds.push_back(to_json(r));
    const auto path = dir / ("seed_" + std::to_string(r.seed) + ".json");
    write_text(path, to_json(r).dump(2) + "\n");
    seed_files.push_back(path.filename().string());
  }
  json report = {{"config_hash", hash}, {"aggregate", to_json(result.aggregate)}, {"seeds", seeds}};
  write_text(files.report_json, report.dump(2) + "\n");
  write_text(files.summary_csv, summary_csv(result.reports));
  write_text(files.curve_csv, curve_csv(result.reports));
  write_text(files.zero_shot_csv, zero_shot_csv(result.reports));

  json manifest = {{"config", config},
                   {"config_hash", hash},
                   {"seed_reports", seed_files},
                   {"files",
                    {files.report_json.filename().string(), files.summary_csv.filename().string(),
                     files.curve_csv.filename().string(), files.zero_shot_csv.filename().string()}},
                   {"wall_seconds", result.wall_seconds}};
  write_text(files.manifest_json, manifest.dump(2) + "\n");
  return files;
}

}  // namespace llb
