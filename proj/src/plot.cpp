#include "pic/plot.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

namespace pic {

using nlohmann::ordered_json;

namespace {

struct Bar {
    std::string label;
    double value = 0.0;
    bool present = false;
};

std::string svg_bar_chart(const std::string& title, const std::string& unit,
                          const std::vector<Bar>& bars) {
    const int width = 480, height = 320;
    const int left = 56, right = 16, top = 48, bottom = 40;
    const int plot_w = width - left - right;
    const int plot_h = height - top - bottom;

    double vmax = 0.0;
    for (const Bar& b : bars) {
        if (b.present && b.value > vmax) vmax = b.value;
    }
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.1;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    s << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    s << "<text x=\"" << width / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
         "text-anchor=\"middle\">"
      << title << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"#333\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"#333\"/>\n";

    for (int g = 0; g <= 4; ++g) {
        const double v = vmax * g / 4.0;
        const double y = top + plot_h - plot_h * g / 4.0;
        s << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
          << "\" stroke=\"#333\"/>\n";
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%.3g", v);
        s << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << lbl
          << "</text>\n";
    }

    const double slot = static_cast<double>(plot_w) / static_cast<double>(bars.size());
    for (size_t i = 0; i < bars.size(); ++i) {
        const double x = left + slot * static_cast<double>(i);
        const double bw = slot * 0.6;
        const double bx = x + (slot - bw) / 2.0;
        if (bars[i].present) {
            const double h = plot_h * bars[i].value / vmax;
            s << "<rect x=\"" << bx << "\" y=\"" << top + plot_h - h << "\" width=\"" << bw
              << "\" height=\"" << h << "\" fill=\"#4878a8\"/>\n";
            char vbuf[32];
            std::snprintf(vbuf, sizeof(vbuf), "%.4g", bars[i].value);
            s << "<text x=\"" << bx + bw / 2 << "\" y=\"" << top + plot_h - h - 6
              << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << vbuf
              << "</text>\n";
        } else {
            s << "<text x=\"" << bx + bw / 2 << "\" y=\"" << top + plot_h - 8
              << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
                 "fill=\"#999\">n/a</text>\n";
        }
        s << "<text x=\"" << bx + bw / 2 << "\" y=\"" << top + plot_h + 16
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
          << bars[i].label << "</text>\n";
    }
    s << "<text x=\"" << left << "\" y=\"" << height - 8
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << unit << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

}  // namespace

int plot_report(const std::filesystem::path& report_path, const std::filesystem::path& out_dir) {
    std::ifstream in(report_path);
    if (!in) throw std::runtime_error("cannot open " + report_path.string());
    ordered_json rep;
    in >> rep;
    std::filesystem::create_directories(out_dir);

    const auto& tasks = rep.at("tasks");
    int files = 0;
    std::ostringstream csv;
    csv << "task,level,metric,value,count\n";

    for (const std::string task : {"reconstruction", "denoising", "registration"}) {
        const auto& levels = tasks.at(task).at("levels");
        std::vector<Bar> bars;
        for (int level = 1; level <= 5; ++level) {
            const auto& cell = levels.at(std::to_string(level));
            Bar b;
            b.label = "L" + std::to_string(level);
            b.present = !cell.at("cd_x1000").is_null();
            if (b.present) b.value = cell.at("cd_x1000").get<double>();
            bars.push_back(b);
            csv << task << "," << level << ",cd_x1000,";
            if (b.present) csv << b.value;
            csv << "," << cell.at("count").get<int>() << "\n";
        }
        write_file(out_dir / (task + ".svg"),
                   svg_bar_chart(task + " by level", "CD x1000", bars));
        ++files;
    }

    const auto& seg = tasks.at("segmentation");
    Bar sb;
    sb.label = "mIoU";
    sb.present = !seg.at("miou").is_null();
    if (sb.present) sb.value = seg.at("miou").get<double>();
    csv << "segmentation,,miou,";
    if (sb.present) csv << sb.value;
    csv << "," << seg.at("count").get<int>() << "\n";
    write_file(out_dir / "segmentation.svg", svg_bar_chart("segmentation", "mIoU (x100)", {sb}));
    ++files;

    write_file(out_dir / "report.csv", csv.str());
    ++files;
    return files;
}

}  // namespace pic
