#include "sketchlab/evalharness.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <unordered_set>

#include "sketchlab/dataio.hpp"
#include "sketchlab/nnops.hpp"
#include "sketchlab/optim.hpp"

namespace sketchlab {

namespace {

constexpr int kConv1Out = 60;  // 64 - 5 + 1
constexpr int kPool1Out = 30;
constexpr int kConv2Out = 26;  // 30 - 5 + 1
constexpr int kPool2Out = 13;
constexpr int kFlatSize = 16 * kPool2Out * kPool2Out;

void check_stack(const Tensor& stack, const char* what) {
  SK_CHECK(stack.rank() == 3 && stack.dim(1) == kImageSize &&
               stack.dim(2) == kImageSize,
           what << " must be [N," << kImageSize << "," << kImageSize
                << "], got " << shape_str(stack.shape()));
}

// First k entries of a seeded partial Fisher-Yates shuffle of 0..n-1.
std::vector<int> pick_indices(int n, int k, Rng& rng) {
  SK_CHECK(k <= n, "cannot pick " << k << " of " << n << " images");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + static_cast<int>(rng.uniform_int(
                          static_cast<uint64_t>(n - i)))]);
  idx.resize(k);
  return idx;
}

void copy_row(const Tensor& src, int src_row, Tensor& dst, long dst_row) {
  std::memcpy(dst.data() + dst_row * kImagePixels,
              src.data() + static_cast<long>(src_row) * kImagePixels,
              sizeof(double) * kImagePixels);
}

Tensor gather_rows(const Tensor& src, const std::vector<int>& rows) {
  Tensor out({static_cast<int>(rows.size()), kImageSize, kImageSize});
  for (size_t i = 0; i < rows.size(); ++i)
    copy_row(src, rows[i], out, static_cast<long>(i));
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

const char* study_name(Study s) {
  switch (s) {
    case Study::kArtefact:
      return "artefact";
    case Study::kRealism:
      return "realism";
    case Study::kUserProxy:
      return "user-proxy";
  }
  SK_CHECK(false, "unknown study kind");
  return "";
}

void EvalConfig::validate() const {
  SK_CHECK(train_size >= 2, "classifier train_size must be >= 2");
  SK_CHECK(train_size % 2 == 0,
           "classifier training mix of " << train_size
                                         << " images cannot balance the two "
                                            "classes; train_size must be even");
  SK_CHECK(eval_per_model >= 1, "eval_per_model must be >= 1");
  SK_CHECK(epochs >= 1, "epochs must be >= 1");
  SK_CHECK(batch >= 1, "batch must be >= 1");
  SK_CHECK(lr > 0.0, "learning rate must be positive");
  SK_CHECK(binarise_threshold > 0.0 && binarise_threshold <= 1.0,
           "binarise_threshold must be in (0,1]");
}

LenetClassifier::LenetClassifier(Rng& rng)
    : conv1_(store_, "conv1", 1, 6, 5, /*stride=*/1, /*pad=*/0, rng),
      conv2_(store_, "conv2", 6, 16, 5, /*stride=*/1, /*pad=*/0, rng),
      fc1_(store_, "fc1", kFlatSize, 120, rng),
      fc2_(store_, "fc2", 120, 84, rng),
      fc3_(store_, "fc3", 84, 1, rng) {}

Var LenetClassifier::logits(const Var& images) const {
  SK_CHECK(images->value.rank() == 3, "classifier expects [B,"
                                          << kImageSize << "," << kImageSize
                                          << "], got "
                                          << shape_str(images->value.shape()));
  int b = images->value.dim(0);
  Var h = reshape(images, {b, 1, kImageSize, kImageSize});
  h = maxpool2d(relu(conv1_(h)));  // [B,6,30,30]
  h = maxpool2d(relu(conv2_(h)));  // [B,16,13,13]
  h = reshape(h, {b, kFlatSize});
  h = relu(fc1_(h));
  h = relu(fc2_(h));
  return fc3_(h);  // [B,1]
}

Tensor LenetClassifier::probabilities(const Tensor& images) const {
  check_stack(images, "classifier input");
  NoGradGuard ng;
  int n = images.dim(0);
  Tensor out({n, 1});
  constexpr int kChunk = 128;
  for (int start = 0; start < n; start += kChunk) {
    int m = std::min(kChunk, n - start);
    Tensor block({m, kImageSize, kImageSize});
    for (int i = 0; i < m; ++i) copy_row(images, start + i, block, i);
    Var p = sigmoid(logits(constant(std::move(block))));
    for (int i = 0; i < m; ++i) out[start + i] = p->value[i];
  }
  return out;
}

Tensor binarise_stack(const Tensor& images, double threshold) {
  Tensor out(images.shape());
  for (long i = 0; i < images.size(); ++i)
    out[i] = images[i] >= threshold ? 1.0 : 0.0;
  return out;
}

std::vector<std::uint64_t> image_hashes(const Tensor& stack) {
  check_stack(stack, "hash input");
  std::vector<std::uint64_t> out(static_cast<size_t>(stack.dim(0)));
  for (int r = 0; r < stack.dim(0); ++r) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const double* px = stack.data() + static_cast<long>(r) * kImagePixels;
    for (int i = 0; i < kImagePixels; ++i) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &px[i], sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001B3ULL;
      }
    }
    out[static_cast<size_t>(r)] = h;
  }
  return out;
}

long hash_overlap(const Tensor& a, const Tensor& b) {
  std::vector<std::uint64_t> ha = image_hashes(a);
  std::unordered_set<std::uint64_t> set(ha.begin(), ha.end());
  long overlap = 0;
  for (std::uint64_t h : image_hashes(b))
    if (set.count(h)) ++overlap;
  return overlap;
}

StudyData make_artefact_data(const Tensor& training_imgs,
                             const ImageSet& generated_by_model,
                             const EvalConfig& cfg, Rng& pick) {
  cfg.validate();
  check_stack(training_imgs, "training images");
  SK_CHECK(!generated_by_model.empty(), "no generated image sets given");
  for (const auto& [name, stack] : generated_by_model)
    check_stack(stack, ("generated images for \"" + name + "\"").c_str());

  int m = static_cast<int>(generated_by_model.size());
  int n_real = cfg.train_size / 2;
  int base = n_real / m, rem = n_real % m;
  SK_CHECK(n_real <= training_imgs.dim(0),
           "study needs " << n_real << " training images, pool has "
                          << training_imgs.dim(0));

  StudyData data;
  data.train_images = Tensor({cfg.train_size, kImageSize, kImageSize});
  data.train_labels.assign(static_cast<size_t>(cfg.train_size), 0.0);

  std::vector<int> real_rows = pick_indices(training_imgs.dim(0), n_real, pick);
  long row = 0;
  for (int r : real_rows) {
    copy_row(training_imgs, r, data.train_images, row);
    data.train_labels[static_cast<size_t>(row)] = 1.0;
    ++row;
  }

  int extras = 0;
  for (const auto& [name, stack] : generated_by_model) {
    int quota = base + (extras < rem ? 1 : 0);
    ++extras;
    SK_CHECK(quota + cfg.eval_per_model <= stack.dim(0),
             "model \"" << name << "\" needs " << quota + cfg.eval_per_model
                        << " generated images (train + held-out), pool has "
                        << stack.dim(0));
    std::vector<int> rows =
        pick_indices(stack.dim(0), quota + cfg.eval_per_model, pick);
    for (int i = 0; i < quota; ++i) copy_row(stack, rows[i], data.train_images, row++);
    data.eval_images[name] = binarise_stack(
        gather_rows(stack, {rows.begin() + quota, rows.end()}),
        cfg.binarise_threshold);
  }
  data.train_images =
      binarise_stack(data.train_images, cfg.binarise_threshold);
  return data;
}

StudyData make_realism_data(const std::string& model,
                            const Tensor& training_imgs,
                            const Tensor& generated, const EvalConfig& cfg,
                            Rng& pick) {
  ImageSet one;
  one.emplace(model, generated);
  return make_artefact_data(training_imgs, one, cfg, pick);
}

LenetClassifier train_lenet(const Tensor& images,
                            const std::vector<double>& labels,
                            const EvalConfig& cfg, Rng& rng) {
  cfg.validate();
  check_stack(images, "classifier training images");
  int n = images.dim(0);
  SK_CHECK(static_cast<size_t>(n) == labels.size(),
           "label count " << labels.size() << " does not match " << n
                          << " images");
  SK_CHECK(n >= 1, "cannot train on an empty set");

  Rng init_rng = rng.fork("init");
  Rng shuffle_rng = rng.fork("shuffle");
  std::vector<double> lab = labels;
  if (cfg.shuffle_labels) {
    Rng label_rng = rng.fork("labels");
    for (size_t i = lab.size(); i > 1; --i)
      std::swap(lab[i - 1], lab[label_rng.uniform_int(i)]);
  }

  LenetClassifier clf(init_rng);
  Adam opt(clf.params().vars(), {.lr = cfg.lr});

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng(shuffle_rng.next_u64());
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[epoch_rng.uniform_int(i)]);
    for (int start = 0; start < n; start += cfg.batch) {
      int b = std::min(cfg.batch, n - start);
      Tensor xb({b, kImageSize, kImageSize});
      Tensor yb({b, 1});
      for (int i = 0; i < b; ++i) {
        int r = order[static_cast<size_t>(start + i)];
        copy_row(images, r, xb, i);
        yb[i] = lab[static_cast<size_t>(r)];
      }
      Var loss = bce_with_logits_mean(clf.logits(constant(std::move(xb))),
                                      constant(std::move(yb)));
      backward(loss, clf.params().vars());
      opt.step();
      opt.zero_grad();
    }
  }
  return clf;
}

double false_positive_rate_percent(const LenetClassifier& clf,
                                   const Tensor& generated) {
  check_stack(generated, "evaluation images");
  int n = generated.dim(0);
  SK_CHECK(n >= 1, "false positive rate over an empty set is undefined");
  Tensor p = clf.probabilities(generated);
  long hits = 0;
  for (int i = 0; i < n; ++i)
    if (p[i] > 0.5) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

EvalReport artefact_study(const Tensor& training_imgs,
                          const ImageSet& generated_by_model,
                          std::uint64_t seed, const EvalConfig& cfg) {
  Rng root(seed);
  Rng pick = root.fork("pick");
  StudyData data =
      make_artefact_data(training_imgs, generated_by_model, cfg, pick);
  Rng train_rng = root.fork("train");
  LenetClassifier clf =
      train_lenet(data.train_images, data.train_labels, cfg, train_rng);

  EvalReport report;
  report.study = Study::kArtefact;
  report.classifier_train_size = cfg.train_size;
  report.seed = seed;
  report.binarise_threshold = cfg.binarise_threshold;
  for (const auto& [name, stack] : data.eval_images)
    report.per_model_fpr[name] = false_positive_rate_percent(clf, stack);
  return report;
}

EvalReport realism_study(const Tensor& training_imgs,
                         const ImageSet& generated_by_model,
                         std::uint64_t seed, const EvalConfig& cfg) {
  cfg.validate();
  SK_CHECK(!generated_by_model.empty(), "no generated image sets given");
  Rng root(seed);

  EvalReport report;
  report.study = Study::kRealism;
  report.classifier_train_size = cfg.train_size;
  report.seed = seed;
  report.binarise_threshold = cfg.binarise_threshold;
  for (const auto& [name, stack] : generated_by_model) {
    Rng pick = root.fork("pick-" + name);
    StudyData data =
        make_realism_data(name, training_imgs, stack, cfg, pick);
    Rng train_rng = root.fork("train-" + name);
    LenetClassifier clf =
        train_lenet(data.train_images, data.train_labels, cfg, train_rng);
    report.per_model_fpr[name] =
        false_positive_rate_percent(clf, data.eval_images.at(name));
  }
  return report;
}

std::vector<EvalReport> training_size_sweep(
    const std::vector<int>& sizes, const Tensor& training_imgs,
    const ImageSet& generated_by_model, std::uint64_t seed,
    const EvalConfig& cfg) {
  SK_CHECK(!sizes.empty(), "sweep needs at least one size");
  for (size_t i = 1; i < sizes.size(); ++i)
    SK_CHECK(sizes[i] > sizes[i - 1],
             "sweep sizes must be strictly ascending");
  std::vector<EvalReport> reports;
  reports.reserve(sizes.size());
  for (int size : sizes) {
    EvalConfig at_size = cfg;
    at_size.train_size = size;
    reports.push_back(
        artefact_study(training_imgs, generated_by_model, seed, at_size));
  }
  return reports;
}

void write_reports_csv(const std::string& path,
                       const std::vector<EvalReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  SK_CHECK(out.good(), "cannot open report file " << path);
  out << "study,model,fpr_percent,train_size,seed\n";
  for (const EvalReport& r : reports)
    for (const auto& [name, fpr] : r.per_model_fpr)
      out << study_name(r.study) << ',' << name << ',' << fmt(fpr) << ','
          << r.classifier_train_size << ',' << r.seed << '\n';
  out.flush();
  SK_CHECK(out.good(), "report write failed");
}

Tensor load_pgm_stack(const std::string& dir) {
  namespace fs = std::filesystem;
  SK_CHECK(fs::is_directory(dir), "not a directory: " << dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      paths.push_back(entry.path().string());
  SK_CHECK(!paths.empty(), "no .pgm files in " << dir);
  std::sort(paths.begin(), paths.end());

  Tensor out({static_cast<int>(paths.size()), kImageSize, kImageSize});
  for (size_t i = 0; i < paths.size(); ++i) {
    SkeletonImage img = read_pgm(paths[i]);
    std::memcpy(out.data() + static_cast<long>(i) * kImagePixels,
                img.px.data(), sizeof(double) * kImagePixels);
  }
  return out;
}

}  // namespace sketchlab
