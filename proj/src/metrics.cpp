#include "agentsod/metrics.hpp"

#include "agentsod/io.hpp"
#include "agentsod/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>
#include <set>
#include <sstream>
#include <stdexcept>

namespace agentsod {

namespace fs = std::filesystem;

namespace {

double ratio(double num, double den) { return num / std::max(den, kMetricEps); }

struct Confusion {
  double tp = 0;
  double fp = 0;
  double fn = 0;
};

Confusion confusion_at(const Tensor& pred, const Tensor& gt, float threshold) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool fg = pred[i] >= threshold;
    const bool truth = gt[i] > 0.5f;
    if (fg && truth) c.tp += 1;
    if (fg && !truth) c.fp += 1;
    if (!fg && truth) c.fn += 1;
  }
  return c;
}

double precision_of(const Confusion& c) { return c.tp + c.fp == 0 ? 1.0 : c.tp / (c.tp + c.fp); }
double recall_of(const Confusion& c) { return c.tp + c.fn == 0 ? 0.0 : c.tp / (c.tp + c.fn); }

double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  return acc / static_cast<double>(t.size());
}

}  // namespace

void check_metric_inputs(const Tensor& pred, const Tensor& gt) {
  if (pred.ndim() != 2 || pred.shape() != gt.shape()) {
    throw ShapeError("metric inputs must be matching H x W maps, got " + to_string(pred.shape()) + " and " +
                     to_string(gt.shape()));
  }
  for (float v : pred.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("prediction value outside [0, 1]");
  }
  for (float v : gt.data()) {
    if (v != 0.0f && v != 1.0f) throw std::invalid_argument("ground truth is not binary");
  }
}

double mae_metric(const Tensor& pred, const Tensor& gt) {
  check_metric_inputs(pred, gt);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(static_cast<double>(pred[i]) - gt[i]);
  return acc / static_cast<double>(pred.size());
}

PrCurve pr_curve(const Tensor& pred, const Tensor& gt) {
  check_metric_inputs(pred, gt);
  // bin = largest k with pred >= k/255, so threshold k admits exactly the
  // pixels binned at or above k.
  std::vector<double> fg_hist(kPrThresholds + 1, 0.0);
  std::vector<double> bg_hist(kPrThresholds + 1, 0.0);
  double positives = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    int bin = static_cast<int>(pred[i] * 255.0f);
    while (bin + 1 <= 255 && pred[i] >= static_cast<float>(bin + 1) / 255.0f) ++bin;
    while (bin > 0 && pred[i] < static_cast<float>(bin) / 255.0f) --bin;
    const bool truth = gt[i] > 0.5f;
    (truth ? fg_hist : bg_hist)[static_cast<std::size_t>(bin)] += 1.0;
    positives += truth ? 1.0 : 0.0;
  }
  PrCurve curve;
  curve.recall_defined = positives > 0.0;
  curve.points.resize(kPrThresholds);
  double tp = 0.0;
  double fp = 0.0;
  for (int k = kPrThresholds - 1; k >= 0; --k) {
    tp += fg_hist[static_cast<std::size_t>(k)];
    fp += bg_hist[static_cast<std::size_t>(k)];
    Confusion c{tp, fp, positives - tp};
    curve.points[static_cast<std::size_t>(k)] = {static_cast<float>(k) / 255.0f, precision_of(c), recall_of(c)};
  }
  return curve;
}

double f_beta(double precision, double recall) {
  if (precision == 0.0 && recall == 0.0) return 0.0;
  return (1.0 + kBetaSquared) * precision * recall / (kBetaSquared * precision + recall);
}

FMeasures f_measures(const PrCurve& curve, const Tensor& pred, const Tensor& gt) {
  check_metric_inputs(pred, gt);
  if (curve.points.size() != kPrThresholds) throw std::invalid_argument("f_measures: curve must have 256 points");
  double best = 0.0;
  for (const PrPoint& p : curve.points) best = std::max(best, f_beta(p.precision, p.recall));
  const float adaptive = static_cast<float>(std::min(2.0 * mean_of(pred), 1.0));
  const Confusion c = confusion_at(pred, gt, adaptive);
  return {best, f_beta(precision_of(c), recall_of(c))};
}

double enhanced_alignment(const Tensor& foreground, const Tensor& gt) {
  check_metric_inputs(foreground, gt);
  const double n = static_cast<double>(gt.size());
  const double gt_mean = mean_of(gt);
  double acc = 0.0;
  if (gt_mean == 0.0) {
    for (float v : foreground.data()) acc += 1.0 - v;
    return acc / n;
  }
  if (gt_mean == 1.0) {
    for (float v : foreground.data()) acc += v;
    return acc / n;
  }
  const double fm_mean = mean_of(foreground);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double a = foreground[i] - fm_mean;
    const double b = gt[i] - gt_mean;
    const double align = ratio(2.0 * a * b, a * a + b * b);
    acc += (align + 1.0) * (align + 1.0) / 4.0;
  }
  return acc / n;
}

double e_measure(const Tensor& pred, const Tensor& gt) {
  check_metric_inputs(pred, gt);
  Tensor fm(pred.shape());
  double acc = 0.0;
  for (int k = 0; k < kPrThresholds; ++k) {
    const float t = static_cast<float>(k) / 256.0f;
    for (std::size_t i = 0; i < pred.size(); ++i) fm[i] = pred[i] > t ? 1.0f : 0.0f;
    acc += enhanced_alignment(fm, gt);
  }
  return acc / kPrThresholds;
}

namespace {

// Similarity of one region's mean/deviation to a perfect foreground.
double object_similarity(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double sigma = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    sigma = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return ratio(2.0 * m, m * m + 1.0 + sigma);
}

double object_score(const Tensor& pred, const Tensor& gt) {
  std::vector<double> fg;
  std::vector<double> bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] > 0.5f) {
      fg.push_back(pred[i]);
    } else {
      bg.push_back(1.0 - pred[i]);
    }
  }
  // Count-weighted so that two perfect regions give exactly 1.
  return (static_cast<double>(fg.size()) * object_similarity(fg) +
          static_cast<double>(bg.size()) * object_similarity(bg)) /
         static_cast<double>(pred.size());
}

// SSIM-style structural similarity of a rectangular block.
double block_similarity(const Tensor& pred, const Tensor& gt, int r0, int r1, int c0, int c1) {
  const int width = pred.dim(1);
  const double count = static_cast<double>(r1 - r0) * (c1 - c0);
  double mx = 0.0;
  double my = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      mx += pred[static_cast<std::size_t>(r) * width + c];
      my += gt[static_cast<std::size_t>(r) * width + c];
    }
  }
  mx /= count;
  my /= count;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      const double dx = pred[static_cast<std::size_t>(r) * width + c] - mx;
      const double dy = gt[static_cast<std::size_t>(r) * width + c] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  sxx = ratio(sxx, count - 1.0);
  syy = ratio(syy, count - 1.0);
  sxy = ratio(sxy, count - 1.0);
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return ratio(alpha, beta);
  return beta == 0.0 ? 1.0 : 0.0;
}

double region_score(const Tensor& pred, const Tensor& gt) {
  const int h = gt.dim(0);
  const int w = gt.dim(1);
  double area = 0.0;
  double sum_r = 0.0;
  double sum_c = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (gt[static_cast<std::size_t>(r) * w + c] > 0.5f) {
        area += 1.0;
        sum_r += r;
        sum_c += c;
      }
    }
  }
  // Split point is one past the rounded centroid (round half to even).
  int x;
  int y;
  if (area == 0.0) {
    x = static_cast<int>(std::nearbyint(w / 2.0));
    y = static_cast<int>(std::nearbyint(h / 2.0));
  } else {
    x = static_cast<int>(std::nearbyint(sum_c / area)) + 1;
    y = static_cast<int>(std::nearbyint(sum_r / area)) + 1;
  }
  x = std::clamp(x, 0, w);
  y = std::clamp(y, 0, h);
  const double total = static_cast<double>(h) * w;
  struct Block {
    int r0, r1, c0, c1;
  };
  const Block blocks[4] = {{0, y, 0, x}, {0, y, x, w}, {y, h, 0, x}, {y, h, x, w}};
  double score = 0.0;
  for (const Block& b : blocks) {
    const double area_b = static_cast<double>(b.r1 - b.r0) * (b.c1 - b.c0);
    if (area_b == 0.0) continue;
    score += area_b * block_similarity(pred, gt, b.r0, b.r1, b.c0, b.c1);
  }
  return score / total;
}

}  // namespace

double s_measure(const Tensor& pred, const Tensor& gt) {
  check_metric_inputs(pred, gt);
  const double gt_mean = mean_of(gt);
  if (gt_mean == 0.0) return 1.0 - mean_of(pred);
  if (gt_mean == 1.0) return mean_of(pred);
  const double score =
      kStructureAlpha * object_score(pred, gt) + (1.0 - kStructureAlpha) * region_score(pred, gt);
  return std::max(0.0, score);
}

ImageMetrics evaluate_image(const Tensor& pred, const Tensor& gt, std::string name) {
  ImageMetrics m;
  m.name = std::move(name);
  m.mae = mae_metric(pred, gt);
  m.curve = pr_curve(pred, gt);
  const FMeasures f = f_measures(m.curve, pred, gt);
  m.max_f = f.max_f;
  m.mean_f = f.mean_f;
  m.mean_e = e_measure(pred, gt);
  m.s_measure = s_measure(pred, gt);
  return m;
}

MetricsReport aggregate(std::vector<ImageMetrics> images) {
  if (images.empty()) throw std::runtime_error("no images");
  MetricsReport report;
  report.images = std::move(images);
  ImageMetrics& mean = report.mean;
  mean.name = "MEAN";
  mean.curve.points.assign(kPrThresholds, PrPoint{0.0f, 0.0, 0.0});
  for (int k = 0; k < kPrThresholds; ++k) mean.curve.points[static_cast<std::size_t>(k)].threshold = static_cast<float>(k) / 255.0f;
  for (const ImageMetrics& m : report.images) {
    mean.mae += m.mae;
    mean.max_f += m.max_f;
    mean.mean_f += m.mean_f;
    mean.mean_e += m.mean_e;
    mean.s_measure += m.s_measure;
    mean.curve.recall_defined = mean.curve.recall_defined && m.curve.recall_defined;
    for (std::size_t k = 0; k < m.curve.points.size(); ++k) {
      mean.curve.points[k].precision += m.curve.points[k].precision;
      mean.curve.points[k].recall += m.curve.points[k].recall;
    }
  }
  const double n = static_cast<double>(report.images.size());
  mean.mae /= n;
  mean.max_f /= n;
  mean.mean_f /= n;
  mean.mean_e /= n;
  mean.s_measure /= n;
  for (PrPoint& p : mean.curve.points) {
    p.precision /= n;
    p.recall /= n;
  }
  return report;
}

namespace {

std::set<std::string> pgm_names(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw std::runtime_error("not a directory: " + dir.string());
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") names.insert(entry.path().filename().string());
  }
  return names;
}

}  // namespace

MetricsReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, int threads) {
  const std::set<std::string> preds = pgm_names(pred_dir);
  const std::set<std::string> gts = pgm_names(gt_dir);
  std::vector<std::string> unmatched;
  std::set_symmetric_difference(preds.begin(), preds.end(), gts.begin(), gts.end(), std::back_inserter(unmatched));
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& n : unmatched) list += (list.empty() ? "" : ", ") + n;
    throw std::runtime_error("unmatched files: " + list);
  }
  if (preds.empty()) throw std::runtime_error("no images");

  const std::vector<std::string> names(preds.begin(), preds.end());
  std::vector<ImageMetrics> images(names.size());
  parallel_for(static_cast<int>(names.size()), threads, [&](int i) {
    const std::string& name = names[static_cast<std::size_t>(i)];
    const Tensor pred = image_to_tensor(read_pgm(pred_dir / name));
    const Tensor gt = mask_to_tensor(read_pgm(gt_dir / name));
    if (pred.shape() != gt.shape()) {
      throw std::runtime_error(name + ": prediction " + to_string(pred.shape()) + " vs mask " + to_string(gt.shape()));
    }
    images[static_cast<std::size_t>(i)] = evaluate_image(pred, gt, name);
  });
  return aggregate(std::move(images));
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(6);
  os << "image,mae,maxf,meanf,me,sm\n";
  auto row = [&os](const ImageMetrics& m) {
    os << m.name << ',' << m.mae << ',' << m.max_f << ',' << m.mean_f << ',' << m.mean_e << ',' << m.s_measure << '\n';
  };
  for (const ImageMetrics& m : report.images) row(m);
  row(report.mean);
  return os.str();
}

void write_report_csv(const fs::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << report_csv(report);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace agentsod
