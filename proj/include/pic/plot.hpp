#pragma once

#include <filesystem>

namespace pic {

// Renders one SVG bar chart per task from a benchmark report plus a CSV of
// every (task, level) cell. Returns the number of files written.
int plot_report(const std::filesystem::path& report_path, const std::filesystem::path& out_dir);

}  // namespace pic
