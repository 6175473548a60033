#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mapfuse {

// Static bar chart for ablation summaries: one labeled bar per entry.
void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& bars);

}  // namespace mapfuse
