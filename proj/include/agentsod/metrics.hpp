#pragma once

// Saliency evaluation: MAE, precision-recall over 256 thresholds, max and
// adaptive F-measure, mean enhanced-alignment measure, structure measure.
//
// Predictions are [H x W] tensors in [0, 1]; ground truth is [H x W] with
// values in {0, 1}. All scores are computed in double precision.

#include "agentsod/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace agentsod {

inline constexpr int kPrThresholds = 256;
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kStructureAlpha = 0.5;
/// Lower bound applied to every ratio denominator.
inline constexpr double kMetricEps = 1e-8;

struct PrPoint {
  float threshold;  // k / 255
  double precision;
  double recall;
};

struct PrCurve {
  std::vector<PrPoint> points;
  /// False when the ground truth has no foreground; recall is then reported as 0.
  bool recall_defined = true;
};

struct FMeasures {
  double max_f;
  double mean_f;
};

/// Throws ShapeError on extent mismatch and std::invalid_argument on values
/// outside [0, 1] or a non-binary mask.
void check_metric_inputs(const Tensor& pred, const Tensor& gt);

double mae_metric(const Tensor& pred, const Tensor& gt);

/// Binarizes `pred >= k/255` for k = 0..255. Precision is 1 when nothing is
/// predicted foreground.
PrCurve pr_curve(const Tensor& pred, const Tensor& gt);

/// (1 + b^2) P R / (b^2 P + R); zero when P = R = 0.
double f_beta(double precision, double recall);

/// max_f over the curve; mean_f at the adaptive threshold min(2 mean(pred), 1).
FMeasures f_measures(const PrCurve& curve, const Tensor& pred, const Tensor& gt);

/// Enhanced alignment of one binary foreground map against the mask.
double enhanced_alignment(const Tensor& foreground, const Tensor& gt);

/// Mean enhanced alignment over the binarizations pred > k/256, k = 0..255.
double e_measure(const Tensor& pred, const Tensor& gt);

/// 0.5 * object score + 0.5 * region score, clamped at zero; degenerate
/// masks fall back to 1 - mean(pred) (empty) or mean(pred) (full).
double s_measure(const Tensor& pred, const Tensor& gt);

struct ImageMetrics {
  std::string name;
  double mae = 0.0;
  double max_f = 0.0;
  double mean_f = 0.0;
  double mean_e = 0.0;
  double s_measure = 0.0;
  PrCurve curve;
};

struct MetricsReport {
  std::vector<ImageMetrics> images;  // lexicographic by name
  ImageMetrics mean;                 // arithmetic means; curve is the mean curve
};

ImageMetrics evaluate_image(const Tensor& pred, const Tensor& gt, std::string name = {});

/// Arithmetic mean of per-image values, reduced in list order.
MetricsReport aggregate(std::vector<ImageMetrics> images);

/// Pairs PGM files by name across the two directories. Throws
/// std::runtime_error naming unmatched or unreadable files, or when there are
/// no images.
MetricsReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                               int threads = 1);

/// image,mae,maxf,meanf,me,sm rows then a MEAN row; LF endings, dot decimals.
std::string report_csv(const MetricsReport& report);
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace agentsod
