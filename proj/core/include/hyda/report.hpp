#pragma once

#include <string>

#include "hyda/trainer.hpp"

namespace hyda {

std::string run_report_json(const RunReport& report);
std::string run_report_csv(const RunReport& report);

void write_run_report(const RunReport& report, const std::string& out_dir);

/// Ablation: metrics table over rows #1..#4 plus a reference row documenting
/// the published full-pipeline result on the original clinical protocol.
void write_ablation_report(const AblationReport& report, const std::string& out_dir);

/// Sweep: per-point metrics plus plot-data CSVs (x, mean, std) per metric.
void write_sweep_report(const SweepReport& report, const std::string& out_dir);

}  // namespace hyda
