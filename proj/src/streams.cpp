#include "llb/streams.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>

#include "llb/errors.hpp"
#include "llb/rng.hpp"

namespace llb {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::size_t kSide = 28;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& file) {
  if (offset + 4 > bytes.size()) throw FormatError(file + ": truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

// Sample ids are unique within a continuum: the high bits hold a namespace
// (task or class pool), the low bits a running index.
SampleId make_id(std::uint64_t space, std::uint64_t index) { return (space << 40) | index; }

void add_stroke(std::vector<double>& img, double x0, double y0, double x1, double y1, double width) {
  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const double len2 = std::max(dx * dx + dy * dy, 1e-9);
  for (std::size_t r = 0; r < kSide; ++r)
    for (std::size_t c = 0; c < kSide; ++c) {
      const double px = static_cast<double>(c);
      const double py = static_cast<double>(r);
      const double t = std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0);
      const double ex = px - (x0 + t * dx);
      const double ey = py - (y0 + t * dy);
      const double v = std::exp(-(ex * ex + ey * ey) / (2.0 * width * width));
      double& p = img[r * kSide + c];
      p = std::max(p, v);
    }
}

// A digit class is a pen trace: a connected polyline through five control
// points. Samples redraw the trace with jittered control points, a random
// stroke width and a small translation, so classes vary the way handwriting
// does while the background stays exactly zero.
using Trace = std::vector<std::pair<double, double>>;

constexpr std::size_t kStyles = 2;     // writing styles per digit class
constexpr double kJitter = 1.2;        // control-point jitter in pixels
constexpr double kOverlapBound = 0.4;  // max cosine between any two style templates

std::vector<double> render_trace(const Trace& trace, double width) {
  std::vector<double> img(kSide * kSide, 0.0);
  for (std::size_t s = 0; s + 1 < trace.size(); ++s)
    add_stroke(img, trace[s].first, trace[s].second, trace[s + 1].first, trace[s + 1].second, width);
  return img;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Each class gets kStyles writing styles. Traces that overlap an earlier
// trace too much are rejected; the bound is relaxed if it cannot be met.
std::vector<std::vector<Trace>> digit_prototypes(std::size_t classes, std::uint64_t seed) {
  Rng rng = make_rng(seed, "mnist-prototype");
  std::uniform_real_distribution<double> coord(6.0, 21.0);
  std::vector<std::vector<Trace>> styles(classes);
  std::vector<std::vector<double>> images;
  double bound = kOverlapBound;
  std::size_t c = 0;
  for (int attempt = 0; c < classes; ++attempt) {
    if (attempt > 0 && attempt % 200 == 0) bound += 0.05;
    Trace t;
    for (int p = 0; p < 5; ++p) t.emplace_back(coord(rng), coord(rng));
    auto img = render_trace(t, 1.2);
    bool distinct = true;
    for (const auto& other : images) distinct = distinct && cosine(img, other) < bound;
    if (!distinct) continue;
    styles[c].push_back(std::move(t));
    images.push_back(std::move(img));
    if (styles[c].size() == kStyles) ++c;
  }
  return styles;
}

void render_sample(const std::vector<Trace>& styles, Rng& rng, std::span<double> out) {
  std::uniform_int_distribution<std::size_t> style(0, styles.size() - 1);
  const Trace& proto = styles[style(rng)];
  std::normal_distribution<double> jitter(0.0, kJitter);
  std::uniform_real_distribution<double> width(0.9, 1.5);
  std::uniform_real_distribution<double> gain(0.8, 1.0);
  std::uniform_int_distribution<int> shift(-2, 2);
  const double dx = shift(rng);
  const double dy = shift(rng);
  Trace t = proto;
  for (auto& [x, y] : t) {
    x += dx + jitter(rng);
    y += dy + jitter(rng);
  }
  const double g = gain(rng);
  const auto img = render_trace(t, width(rng));
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::clamp(g * img[i], 0.0, 1.0);
}

SampleSet synthetic_digits(std::size_t n, const std::vector<std::vector<Trace>>& protos, Rng& rng,
                           std::uint64_t id_space) {
  SampleSet set;
  set.inputs.cols = kSide * kSide;
  std::uniform_int_distribution<int> pick_label(0, static_cast<int>(protos.size()) - 1);
  std::vector<double> x(kSide * kSide);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = pick_label(rng);
    render_sample(protos[static_cast<std::size_t>(label)], rng, x);
    set.push_back(x, label, make_id(id_space, i));
  }
  return set;
}

SampleSet permute_subset(const SampleSet& src, std::size_t count, const std::vector<std::size_t>& perm, Rng& rng,
                         std::uint64_t id_space) {
  std::vector<std::size_t> idx(src.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (count > 0 && count < src.size()) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
  }
  SampleSet out;
  out.inputs = Matrix(idx.size(), src.dim());
  out.labels.reserve(idx.size());
  out.ids.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto from = src.inputs.row(idx[r]);
    auto to = out.inputs.row(r);
    for (std::size_t p = 0; p < perm.size(); ++p) to[p] = from[perm[p]];
    out.labels.push_back(src.labels[idx[r]]);
    out.ids.push_back(make_id(id_space, src.ids[idx[r]] & ((std::uint64_t{1} << 40) - 1)));
  }
  return out;
}

}  // namespace

SampleSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  const std::string iname = images.filename().string();
  const std::string lname = labels.filename().string();

  if (read_be32(img, 0, iname) != kImageMagic) throw FormatError(iname + ": bad image magic", 0);
  if (read_be32(lab, 0, lname) != kLabelMagic) throw FormatError(lname + ": bad label magic", 0);

  const std::size_t count = read_be32(img, 4, iname);
  const std::size_t rows = read_be32(img, 8, iname);
  const std::size_t cols = read_be32(img, 12, iname);
  const std::size_t label_count = read_be32(lab, 4, lname);
  if (count != label_count)
    throw FormatError("image count " + std::to_string(count) + " != label count " + std::to_string(label_count), 4);

  const std::size_t dim = rows * cols;
  constexpr std::size_t kImageHeader = 16;
  constexpr std::size_t kLabelHeader = 8;
  if (img.size() < kImageHeader + count * dim) throw FormatError(iname + ": truncated pixel data", img.size());
  if (lab.size() < kLabelHeader + count) throw FormatError(lname + ": truncated label data", lab.size());

  const std::size_t n = (limit > 0) ? std::min(limit, count) : count;
  SampleSet set;
  set.inputs = Matrix(n, dim);
  set.labels.resize(n);
  set.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + kImageHeader + i * dim;
    auto row = set.inputs.row(i);
    for (std::size_t p = 0; p < dim; ++p) row[p] = static_cast<double>(px[p]) / 255.0;
    set.labels[i] = lab[kLabelHeader + i];
    set.ids[i] = i;
  }
  return set;
}

std::optional<BaseDataset> find_mnist(const std::filesystem::path& dir, std::size_t train_limit,
                                      std::size_t test_limit) {
  const auto ti = dir / "train-images-idx3-ubyte";
  const auto tl = dir / "train-labels-idx1-ubyte";
  const auto si = dir / "t10k-images-idx3-ubyte";
  const auto sl = dir / "t10k-labels-idx1-ubyte";
  for (const auto& p : {ti, tl, si, sl})
    if (!std::filesystem::exists(p)) return std::nullopt;
  BaseDataset base{load_mnist_idx(ti, tl, train_limit), load_mnist_idx(si, sl, test_limit)};
  return base;
}

BaseDataset make_synthetic_mnist(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  const auto protos = digit_prototypes(10, seed);
  Rng train_rng = make_rng(seed, "mnist-train");
  Rng test_rng = make_rng(seed, "mnist-test");
  BaseDataset base;
  base.train = synthetic_digits(n_train, protos, train_rng, 0);
  base.test = synthetic_digits(n_test, protos, test_rng, 1);
  return base;
}

std::vector<std::size_t> task_permutation(std::size_t k, std::size_t dim, std::uint64_t seed) {
  std::vector<std::size_t> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  if (k == 0) return perm;
  Rng rng = make_rng(seed, "permutation", k);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Continuum make_permuted_stream(const BaseDataset& base, const PermutedStreamOptions& opts, std::uint64_t seed) {
  if (opts.tasks < 1) throw ConfigError("permuted stream needs at least one task");
  if (opts.tasks > 1 && (opts.cv_tasks < 1 || opts.cv_tasks >= opts.tasks))
    throw ConfigError("cv_tasks must satisfy 1 <= cv_tasks < tasks");
  if (base.train.empty() || base.test.empty()) throw ConfigError("permuted stream: empty base dataset");

  const int max_label = std::max(*std::max_element(base.train.labels.begin(), base.train.labels.end()),
                                 *std::max_element(base.test.labels.begin(), base.test.labels.end()));
  std::vector<int> label_set(static_cast<std::size_t>(max_label) + 1);
  std::iota(label_set.begin(), label_set.end(), 0);

  std::vector<TaskPtr> tasks;
  for (std::size_t k = 0; k < opts.tasks; ++k) {
    auto task = std::make_shared<TaskDataset>();
    task->task = static_cast<TaskId>(k);
    const auto perm = task_permutation(k, base.train.dim(), seed);
    Rng pick = make_rng(seed, "task-subset", k);
    // Train ids live in namespace 2k+2, test ids in 2k+3.
    task->train = permute_subset(base.train, opts.train_per_task, perm, pick, 2 * k + 2);
    task->test = permute_subset(base.test, opts.test_per_task, perm, pick, 2 * k + 3);
    task->descriptor = static_cast<int>(k);
    task->label_set = label_set;
    tasks.push_back(std::move(task));
  }
  return Continuum{TaskStream(std::move(tasks)), opts.tasks > 1 ? opts.cv_tasks : 0, true};
}

SplitGenerator make_split_generator(const SplitStreamOptions& opts, std::uint64_t seed) {
  if (opts.num_classes == 0 || opts.classes_per_task == 0 || opts.tasks == 0 || opts.attributes == 0 ||
      opts.input_dim == 0)
    throw ConfigError("synthetic split stream: all sizes must be >= 1");
  if (opts.classes_per_task > opts.num_classes)
    throw ConfigError("synthetic split stream: classes_per_task exceeds num_classes");
  if (!opts.with_replacement && opts.tasks * opts.classes_per_task > opts.num_classes)
    throw ConfigError("synthetic split stream: " + std::to_string(opts.tasks) + " tasks x " +
                      std::to_string(opts.classes_per_task) + " classes exceeds " +
                      std::to_string(opts.num_classes) + " classes without replacement");
  if (opts.attributes < 63 && opts.num_classes >= (std::size_t{1} << opts.attributes))
    throw ConfigError("synthetic split stream: too few attributes for distinct class descriptors");

  SplitGenerator gen;
  const std::size_t A = opts.attributes;
  gen.class_attributes = Matrix(opts.num_classes, A);
  Rng attr_rng = make_rng(seed, "attributes");
  std::bernoulli_distribution coin(0.5);
  std::set<std::vector<int>> seen;
  for (std::size_t c = 0; c < opts.num_classes; ++c) {
    std::vector<int> bits(A);
    // Rows must be distinct and nonzero so descriptors separate classes.
    do {
      for (auto& b : bits) b = coin(attr_rng) ? 1 : 0;
    } while (std::all_of(bits.begin(), bits.end(), [](int b) { return b == 0; }) || seen.contains(bits));
    seen.insert(bits);
    for (std::size_t a = 0; a < A; ++a) gen.class_attributes(c, a) = bits[a];
  }

  Rng proj_rng = make_rng(seed, "projection");
  // About half the attributes are on, so this scale gives class means with
  // unit variance per input coordinate.
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(A)));
  gen.projection = Matrix(opts.input_dim, A);
  for (double& v : gen.projection.data) v = gauss(proj_rng);

  gen.class_means = Matrix(opts.num_classes, opts.input_dim);
  for (std::size_t c = 0; c < opts.num_classes; ++c)
    for (std::size_t d = 0; d < opts.input_dim; ++d) {
      double s = 0.0;
      for (std::size_t a = 0; a < A; ++a) s += gen.projection(d, a) * gen.class_attributes(c, a);
      gen.class_means(c, d) = s;
    }

  Rng split_rng = make_rng(seed, "class-split");
  std::vector<int> classes(opts.num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  if (!opts.with_replacement) {
    std::shuffle(classes.begin(), classes.end(), split_rng);
    for (std::size_t t = 0; t < opts.tasks; ++t)
      gen.task_classes.emplace_back(classes.begin() + static_cast<std::ptrdiff_t>(t * opts.classes_per_task),
                                    classes.begin() + static_cast<std::ptrdiff_t>((t + 1) * opts.classes_per_task));
  } else {
    for (std::size_t t = 0; t < opts.tasks; ++t) {
      std::shuffle(classes.begin(), classes.end(), split_rng);
      gen.task_classes.emplace_back(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(opts.classes_per_task));
    }
  }
  return gen;
}

Continuum make_synthetic_split_stream(const SplitStreamOptions& opts, std::uint64_t seed) {
  const SplitGenerator gen = make_split_generator(opts, seed);
  if (opts.tasks > 1 && (opts.cv_tasks < 1 || opts.cv_tasks >= opts.tasks))
    throw ConfigError("cv_tasks must satisfy 1 <= cv_tasks < tasks");

  std::vector<std::size_t> occurrences(opts.num_classes, 0);
  for (const auto& tc : gen.task_classes)
    for (int c : tc) ++occurrences[static_cast<std::size_t>(c)];

  // Per-class training pools, cut into one disjoint shard per occurrence.
  Rng sample_rng = make_rng(seed, "samples");
  std::normal_distribution<double> noise(0.0, opts.noise);
  std::vector<SampleSet> pools(opts.num_classes);
  std::vector<SampleSet> tests(opts.num_classes);
  std::vector<double> x(opts.input_dim);
  auto draw = [&](std::size_t c, SampleSet& into, std::size_t n, std::uint64_t space) {
    into.inputs.cols = opts.input_dim;
    for (std::size_t i = 0; i < n; ++i) {
      auto mean = gen.class_means.row(c);
      for (std::size_t d = 0; d < opts.input_dim; ++d) x[d] = mean[d] + noise(sample_rng);
      into.push_back(x, static_cast<int>(c), make_id(space, i));
    }
  };
  for (std::size_t c = 0; c < opts.num_classes; ++c) {
    if (occurrences[c] == 0) continue;
    draw(c, pools[c], opts.train_per_class * occurrences[c], 2 * c + 2);
    draw(c, tests[c], opts.test_per_class, 2 * c + 3);
  }

  std::vector<std::size_t> used(opts.num_classes, 0);
  std::vector<TaskPtr> tasks;
  for (std::size_t t = 0; t < opts.tasks; ++t) {
    auto task = std::make_shared<TaskDataset>();
    task->task = static_cast<TaskId>(t);
    task->label_set = gen.task_classes[t];
    Matrix desc(task->label_set.size(), opts.attributes);
    task->train.inputs.cols = opts.input_dim;
    task->test.inputs.cols = opts.input_dim;
    for (std::size_t local = 0; local < task->label_set.size(); ++local) {
      const auto c = static_cast<std::size_t>(task->label_set[local]);
      for (std::size_t a = 0; a < opts.attributes; ++a) desc(local, a) = gen.class_attributes(c, a);
      const std::size_t shard = used[c]++;
      for (std::size_t i = 0; i < opts.train_per_class; ++i) {
        const std::size_t row = shard * opts.train_per_class + i;
        task->train.push_back(pools[c].inputs.row(row), static_cast<int>(local), pools[c].ids[row]);
      }
      for (std::size_t i = 0; i < tests[c].size(); ++i)
        task->test.push_back(tests[c].inputs.row(i), static_cast<int>(local), tests[c].ids[i]);
    }
    task->descriptor = std::move(desc);
    tasks.push_back(std::move(task));
  }
  return Continuum{TaskStream(std::move(tasks)), opts.tasks > 1 ? opts.cv_tasks : 0, true};
}

std::pair<TaskStream, TaskStream> split_cv_ev(const Continuum& continuum) {
  const std::size_t T = continuum.tasks.size();
  if (continuum.cv_split < 1 || continuum.cv_split >= T)
    throw ConfigError("cv_split must satisfy 1 <= T_cv < T (T_cv=" + std::to_string(continuum.cv_split) +
                      ", T=" + std::to_string(T) + ")");
  std::vector<TaskPtr> cv, ev;
  for (std::size_t i = 0; i < T; ++i) (i < continuum.cv_split ? cv : ev).push_back(continuum.tasks.ptr(i));
  return {TaskStream(std::move(cv)), TaskStream(std::move(ev))};
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                        std::size_t epochs) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  if (n == 0) return out;
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch_size)
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

std::vector<Batch> minibatches(const TaskDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                               std::size_t epochs) {
  Rng rng(seed);
  std::vector<Batch> out;
  for (const auto& idx : minibatch_indices(dataset.train.size(), batch_size, rng, epochs))
    out.push_back(dataset.train.gather(idx, dataset.task));
  return out;
}

}  // namespace llb
