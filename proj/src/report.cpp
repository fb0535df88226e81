#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rramft/error.hpp"
#include "rramft/harness.hpp"

namespace fs = std::filesystem;

namespace rramft {

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> columns = {
        "net",     "placement", "width",   "dc_rate",    "fault_rate", "crossbars",  "samples",
        "mean",    "stddev",    "min",     "max",        "latency",    "energy",     "parameters",
        "p_prime", "fault_seed", "device_tiles", "checkpoint", "state_hash"};
    return columns;
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                fields.back() += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.emplace_back();
        } else {
            fields.back() += ch;
        }
    }
    if (quoted) throw FormatError("results line " + std::to_string(lineno) + " has an unterminated quote");
    return fields;
}

double parse_double(const std::string& s, std::size_t lineno) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw FormatError("results line " + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t lineno) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw FormatError("results line " + std::to_string(lineno) + ": bad integer '" + s + "'");
    return v;
}

} // namespace

std::string records_to_csv(const std::vector<SweepRecord>& records) {
    std::ostringstream os;
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : records) {
        os << csv_field(r.net) << ',' << csv_field(r.placement) << ',' << num(r.width) << ',' << num(r.dc_rate) << ','
           << num(r.fault_rate) << ',' << r.crossbars << ',' << r.samples << ',' << num(r.mean) << ','
           << num(r.stddev) << ',' << num(r.min) << ',' << num(r.max) << ',' << num(r.latency) << ','
           << num(r.energy) << ',' << r.parameters << ',' << num(r.p_prime) << ',' << r.fault_seed << ','
           << r.device_tiles << ',' << csv_field(r.checkpoint) << ',' << csv_field(r.state_hash) << '\n';
    }
    return os.str();
}

std::vector<SweepRecord> records_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("results file is empty");
    if (split_csv_line(line, 1) != csv_columns()) throw FormatError("results header does not match the expected columns");
    std::vector<SweepRecord> out;
    for (std::size_t lineno = 2; std::getline(is, line); ++lineno) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line, lineno);
        if (f.size() != csv_columns().size()) {
            throw FormatError("results line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                              " fields");
        }
        SweepRecord r;
        r.net = f[0];
        r.placement = f[1];
        r.width = parse_double(f[2], lineno);
        r.dc_rate = parse_double(f[3], lineno);
        r.fault_rate = parse_double(f[4], lineno);
        r.crossbars = parse_u64(f[5], lineno);
        r.samples = parse_u64(f[6], lineno);
        r.mean = parse_double(f[7], lineno);
        r.stddev = parse_double(f[8], lineno);
        r.min = parse_double(f[9], lineno);
        r.max = parse_double(f[10], lineno);
        r.latency = parse_double(f[11], lineno);
        r.energy = parse_double(f[12], lineno);
        r.parameters = parse_u64(f[13], lineno);
        r.p_prime = parse_double(f[14], lineno);
        r.fault_seed = parse_u64(f[15], lineno);
        r.device_tiles = parse_u64(f[16], lineno);
        r.checkpoint = f[17];
        r.state_hash = f[18];
        out.push_back(std::move(r));
    }
    return out;
}

void write_results_csv(const std::vector<SweepRecord>& records, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write '" + path + "'");
    os << records_to_csv(records);
}

std::vector<SweepRecord> read_results_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return records_from_csv(ss.str());
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[32];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// Plot frame: 640x400 canvas, data area inset by margins, legend on the right.
struct Frame {
    double left = 60, top = 40, width = 420, height = 300;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * width; }
    double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

void open_svg(std::ostringstream& os, const std::string& title) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\" "
          "font-family=\"sans-serif\" font-size=\"11\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n"
       << "<text x=\"270\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel,
          const std::vector<double>& xticks, bool numeric_x) {
    os << "<g stroke=\"black\" fill=\"none\">\n"
       << "<line x1=\"" << f.left << "\" y1=\"" << f.top + f.height << "\" x2=\"" << f.left + f.width << "\" y2=\""
       << f.top + f.height << "\"/>\n"
       << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\"" << f.top + f.height
       << "\"/>\n</g>\n";
    for (int i = 0; i <= 5; ++i) {
        const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
        os << "<line x1=\"" << f.left - 4 << "\" y1=\"" << f.py(y) << "\" x2=\"" << f.left + f.width << "\" y2=\""
           << f.py(y) << "\" stroke=\"#dddddd\"/>\n"
           << "<text x=\"" << f.left - 8 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y, "%.1f")
           << "</text>\n";
    }
    if (numeric_x) {
        for (double x : xticks) {
            os << "<text x=\"" << f.px(x) << "\" y=\"" << f.top + f.height + 16 << "\" text-anchor=\"middle\">"
               << fmt(x, "%g") << "</text>\n";
        }
    }
    os << "<text x=\"" << f.left + f.width / 2 << "\" y=\"" << f.top + f.height + 34
       << "\" text-anchor=\"middle\">" << xml_escape(xlabel) << "</text>\n"
       << "<text x=\"16\" y=\"" << f.top + f.height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << f.top + f.height / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
}

void legend_entry(std::ostringstream& os, std::size_t i, const std::string& label) {
    const double y = 50 + 18.0 * static_cast<double>(i);
    os << "<rect x=\"500\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[i % 10] << "\"/>\n"
       << "<text x=\"518\" y=\"" << y + 1 << "\">" << xml_escape(label) << "</text>\n";
}

std::vector<SweepRecord> for_net(const std::vector<SweepRecord>& records, const std::string& net) {
    std::vector<SweepRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [&](const SweepRecord& r) { return r.net == net; });
    if (out.empty()) throw ConfigError("no records for net '" + net + "'");
    return out;
}

// Label for the width/placement part of a series; empty when the grid has a
// single combination.
std::map<std::pair<double, std::string>, std::string> variant_labels(const std::vector<SweepRecord>& rs) {
    std::set<std::pair<double, std::string>> variants;
    std::set<double> widths;
    std::set<std::string> placements;
    for (const auto& r : rs) {
        variants.insert({r.width, r.placement});
        widths.insert(r.width);
        placements.insert(r.placement);
    }
    std::map<std::pair<double, std::string>, std::string> out;
    for (const auto& v : variants) {
        std::string label;
        if (widths.size() > 1) label += "w=" + fmt(v.first, "%g");
        if (placements.size() > 1) label += (label.empty() ? "" : " ") + v.second;
        out[v] = label;
    }
    return out;
}

} // namespace

std::string accuracy_plot_svg(const std::vector<SweepRecord>& records, const std::string& net) {
    const auto rs = for_net(records, net);
    const auto variants = variant_labels(rs);
    std::map<std::tuple<std::string, double, double>, std::vector<const SweepRecord*>> series;
    std::set<double> dc_rates;
    for (const auto& r : rs) {
        series[{r.placement, r.width, r.fault_rate}].push_back(&r);
        dc_rates.insert(r.dc_rate);
    }
    Frame f;
    f.x0 = *dc_rates.begin();
    f.x1 = *dc_rates.rbegin();

    std::ostringstream os;
    open_svg(os, net + ": accuracy vs drop-connect rate");
    axes(os, f, "drop-connect rate", "mean accuracy", {dc_rates.begin(), dc_rates.end()}, true);
    std::size_t i = 0;
    for (auto& [key, points] : series) {
        const auto& [placement, width, fault_rate] = key;
        std::sort(points.begin(), points.end(), [](auto* a, auto* b) { return a->dc_rate < b->dc_rate; });
        const char* color = kPalette[i % 10];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto* p : points) os << f.px(p->dc_rate) << ',' << f.py(p->mean) << ' ';
        os << "\"/>\n";
        for (const auto* p : points) {
            os << "<line x1=\"" << f.px(p->dc_rate) << "\" y1=\"" << f.py(std::min(1.0, p->mean + p->stddev))
               << "\" x2=\"" << f.px(p->dc_rate) << "\" y2=\"" << f.py(std::max(0.0, p->mean - p->stddev))
               << "\" stroke=\"" << color << "\"/>\n"
               << "<circle cx=\"" << f.px(p->dc_rate) << "\" cy=\"" << f.py(p->mean) << "\" r=\"3\" fill=\"" << color
               << "\"/>\n";
        }
        std::string label = "f=" + fmt(fault_rate, "%g");
        const std::string& v = variants.at({width, placement});
        if (!v.empty()) label += " " + v;
        legend_entry(os, i++, label);
    }
    os << "</svg>\n";
    return os.str();
}

std::string best_rate_plot_svg(const std::vector<SweepRecord>& records, const std::string& net) {
    const auto rs = for_net(records, net);
    const auto variants = variant_labels(rs);
    std::set<double> fault_rates;
    // (width, placement) -> fault rate -> best record
    std::map<std::pair<double, std::string>, std::map<double, const SweepRecord*>> best;
    for (const auto& r : rs) {
        fault_rates.insert(r.fault_rate);
        auto& slot = best[{r.width, r.placement}][r.fault_rate];
        if (!slot || r.mean > slot->mean || (r.mean == slot->mean && r.dc_rate < slot->dc_rate)) slot = &r;
    }
    Frame f;
    std::ostringstream os;
    open_svg(os, net + ": best drop-connect rate per fault rate");
    axes(os, f, "fault rate", "best mean accuracy", {}, false);
    const double group_w = f.width / static_cast<double>(fault_rates.size());
    const double bar_w = group_w * 0.8 / static_cast<double>(best.size());
    std::size_t gi = 0;
    for (double fr : fault_rates) {
        const double gx = f.left + group_w * static_cast<double>(gi) + group_w * 0.1;
        os << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << f.top + f.height + 16
           << "\" text-anchor=\"middle\">" << fmt(fr, "%g") << "</text>\n";
        std::size_t si = 0;
        for (const auto& [variant, per_rate] : best) {
            const auto it = per_rate.find(fr);
            if (it != per_rate.end()) {
                const SweepRecord& r = *it->second;
                const double x = gx + bar_w * static_cast<double>(si);
                os << "<rect x=\"" << x << "\" y=\"" << f.py(r.mean) << "\" width=\"" << bar_w * 0.9
                   << "\" height=\"" << f.py(0.0) - f.py(r.mean) << "\" fill=\"" << kPalette[si % 10] << "\"/>\n"
                   << "<text x=\"" << x + bar_w * 0.45 << "\" y=\"" << f.py(r.mean) - 4
                   << "\" text-anchor=\"middle\" font-size=\"9\">p=" << fmt(r.dc_rate, "%g") << "</text>\n";
            }
            ++si;
        }
        ++gi;
    }
    std::size_t si = 0;
    for (const auto& entry : best) {
        const std::string& v = variants.at(entry.first);
        legend_entry(os, si++, v.empty() ? "best rate" : v);
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<std::string> report(const std::vector<SweepRecord>& records, const std::string& out_dir) {
    if (records.empty()) throw ConfigError("nothing to report");
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    const std::string csv = (fs::path(out_dir) / "results.csv").string();
    write_results_csv(records, csv);
    written.push_back(csv);
    std::set<std::string> nets;
    for (const auto& r : records) nets.insert(r.net);
    for (const auto& net : nets) {
        for (const auto& [stem, svg] : {std::pair{"fig_accuracy_", accuracy_plot_svg(records, net)},
                                        std::pair{"fig_bestrate_", best_rate_plot_svg(records, net)}}) {
            const std::string path = (fs::path(out_dir) / (stem + net + ".svg")).string();
            std::ofstream os(path);
            if (!os) throw FormatError("cannot write '" + path + "'");
            os << svg;
            written.push_back(path);
        }
    }
    return written;
}

} // namespace rramft
