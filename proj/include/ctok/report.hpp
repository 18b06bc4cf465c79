#pragma once

#include "ctok/embedding.hpp"
#include "ctok/gair.hpp"
#include "ctok/metrics.hpp"
#include "ctok/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ctok {

// Cosine matrix as a heatmap; values below clip_at share the lowest colour.
Image render_affinity(const AffinityReport& report, int cell = 12);
// One bar per attribute norm, the learned token drawn last in a second colour.
Image render_norms(const NormReport& report, int bar_width = 6, int height = 120);
// Score-vs-weight polyline on a white canvas.
Image render_curve(std::span<const double> xs, std::span<const double> ys, int width = 220, int height = 120);

std::string affinity_csv(const AffinityReport& report);
std::string norm_csv(const NormReport& report, const std::vector<std::string>& attributes);
std::string eval_table_csv(const std::vector<EvalReport>& reports);

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

// Writes affinity.{png,csv} and norms.{png,csv}; adds gair_curve.{png,csv}
// when a GAIR result is supplied.
ReportFiles write_report(const std::filesystem::path& dir, const AffinityReport& affinity_report,
                         const NormReport& norms, const std::vector<std::string>& attributes,
                         const GairResult* gair = nullptr);

}  // namespace ctok
