#include "haystack/reporting.hpp"

#include "haystack/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace haystack {

namespace {

using nlohmann::json;

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

double verdict_score(Verdict v) {
    switch (v) {
        case Verdict::FAIL: return -1.0;
        case Verdict::EXCEL: return 1.0;
        default: return 0.0;
    }
}

// Accuracy of one cell: mean of instance values in instance order.
struct CellKey {
    int grid, setting_index, setting, perm, replicate, task;
    bool operator<(const CellKey& o) const {
        return std::tie(grid, setting_index, setting, perm, replicate, task) <
               std::tie(o.grid, o.setting_index, o.setting, o.perm, o.replicate, o.task);
    }
};

std::map<CellKey, double> cell_accuracies(const ResultsStore& store) {
    std::map<CellKey, std::vector<std::pair<int, double>>> cells;
    for (const auto& r : store.sorted_records()) {
        CellKey key{r.grid_index, r.setting_index, static_cast<int>(r.setting),
                    r.perm_index, r.replicate, r.task_index};
        cells[key].emplace_back(r.instance_index, r.value);
    }
    std::map<CellKey, double> accs;
    for (auto& [key, values] : cells) {
        std::sort(values.begin(), values.end());
        double sum = 0.0;
        for (const auto& [_, v] : values) sum += v;
        accs[key] = sum / static_cast<double>(values.size());
    }
    return accs;
}

// Mean context tokens over the lifelong cells of a grid point.
double mean_context_tokens(const ResultsStore& store, int grid_index) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : store.sorted_records()) {
        if (r.grid_index != grid_index || r.setting != SettingKind::lifelong) continue;
        sum += r.context_tokens;
        ++n;
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

std::string color_for(double value, bool na) {
    if (na) return "#c8c8c8";
    // Diverging map: -1 red, 0 white, +1 blue.
    double v = std::clamp(value, -1.0, 1.0);
    int r, g, b;
    if (v < 0) {
        double a = -v;
        r = 255 - static_cast<int>(a * (255 - 214));
        g = 255 - static_cast<int>(a * (255 - 69));
        b = 255 - static_cast<int>(a * (255 - 65));
    } else {
        double a = v;
        r = 255 - static_cast<int>(a * (255 - 74));
        g = 255 - static_cast<int>(a * (255 - 105));
        b = 255 - static_cast<int>(a * (255 - 189));
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

class SvgWriter {
public:
    SvgWriter(int width, int height) {
        body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                 "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\">\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill) {
        body_ += "<rect x=\"" + fmt(x, 1) + "\" y=\"" + fmt(y, 1) + "\" width=\"" + fmt(w, 1) +
                 "\" height=\"" + fmt(h, 1) + "\" fill=\"" + fill +
                 "\" stroke=\"#888888\" stroke-width=\"0.5\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 10,
              const std::string& anchor = "start") {
        body_ += "<text x=\"" + fmt(x, 1) + "\" y=\"" + fmt(y, 1) + "\" font-size=\"" +
                 std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(s) +
                 "</text>\n";
    }
    std::string finish() { return body_ + "</svg>\n"; }

private:
    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            switch (c) {
                case '&': out += "&amp;"; break;
                case '<': out += "&lt;"; break;
                case '>': out += "&gt;"; break;
                default: out.push_back(c);
            }
        }
        return out;
    }
    std::string body_;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

} // namespace

std::string token_count_label(double mean_tokens) {
    if (mean_tokens >= 1000.0) {
        double k = mean_tokens / 1000.0;
        char buf[32];
        if (k >= 10.0) {
            std::snprintf(buf, sizeof(buf), "%.0fk", k);
        } else {
            std::snprintf(buf, sizeof(buf), "%.1fk", k);
        }
        return buf;
    }
    return std::to_string(static_cast<int>(std::llround(mean_tokens)));
}

RunScore score_results(const RunManifest& manifest, const ResultsStore& store,
                       double alpha, int icl_kshot) {
    RunScore score;
    score.manifest_digest = manifest.digest();
    score.alpha = alpha;
    auto accs = cell_accuracies(store);

    if (manifest.mode == RunMode::niah) {
        for (const auto& [key, acc] : accs) {
            NiahCellScore cell;
            cell.length_index = key.grid;
            cell.depth_index = key.task;
            cell.context_length = manifest.niah.context_lengths.at(
                static_cast<std::size_t>(key.grid));
            cell.depth = manifest.niah.depths.at(static_cast<std::size_t>(key.task));
            cell.recall = acc;
            score.niah_cells.push_back(cell);
        }
        return score;
    }

    if (manifest.mode == RunMode::controlled) {
        const auto& point = manifest.grid_points.front();
        for (std::size_t si = 0; si < manifest.controlled_settings.size(); ++si) {
            const auto& setting = manifest.controlled_settings[si];
            ControlledSettingScore cs;
            cs.setting_index = static_cast<int>(si);
            cs.setting = setting_name(setting.kind);
            cs.repetitions = setting.repetitions.value_or(0);
            double total = 0.0;
            int count = 0;
            for (int t = 0; t < point.n_task; ++t) {
                double task_total = 0.0;
                int task_count = 0;
                for (int r = 0; r < manifest.n_replicates; ++r) {
                    CellKey key{0, static_cast<int>(si), static_cast<int>(setting.kind),
                                setting.kind == SettingKind::single_task ? -1 : 0, r, t};
                    auto it = accs.find(key);
                    if (it == accs.end()) {
                        throw MissingCellsError("controlled cell missing: setting " + cs.setting +
                                                " task " + std::to_string(t) + " replicate " +
                                                std::to_string(r));
                    }
                    task_total += it->second;
                    ++task_count;
                }
                cs.by_task[point.task_names[static_cast<std::size_t>(t)]] =
                    task_total / task_count;
                total += task_total;
                count += task_count;
            }
            cs.mean_acc = total / count;
            score.controlled.push_back(std::move(cs));
        }
        return score;
    }

    // Scale modes: per grid point, verdicts over (t, p) with replicate-paired
    // accuracy lists.
    for (std::size_t gi = 0; gi < manifest.grid_points.size(); ++gi) {
        const auto& point = manifest.grid_points[gi];
        GridPointScore gp;
        gp.grid_index = static_cast<int>(gi);
        gp.grid_value = point.grid_value;
        gp.n_task = point.n_task;
        gp.n_shot = point.n_shot;
        gp.mean_context_tokens = mean_context_tokens(store, gp.grid_index);
        for (const auto& r : store.sorted_records()) {
            if (r.grid_index == gp.grid_index && r.no_match) ++gp.no_match_count;
        }

        double single_sum = 0.0, lifelong_sum = 0.0;
        int single_n = 0, lifelong_n = 0;
        for (int t = 0; t < point.n_task; ++t) {
            std::vector<double> single_accs;
            for (int r = 0; r < manifest.n_replicates; ++r) {
                CellKey key{gp.grid_index, -1, static_cast<int>(SettingKind::single_task), -1, r, t};
                auto it = accs.find(key);
                if (it == accs.end()) {
                    throw MissingCellsError("single-task cell missing: grid " +
                                            std::to_string(gi) + " task " + std::to_string(t) +
                                            " replicate " + std::to_string(r));
                }
                single_accs.push_back(it->second);
                single_sum += it->second;
                ++single_n;
            }
            for (int p = 0; p < manifest.n_permutations; ++p) {
                std::vector<double> lifelong_accs;
                for (int r = 0; r < manifest.n_replicates; ++r) {
                    CellKey key{gp.grid_index, -1, static_cast<int>(SettingKind::lifelong), p, r, t};
                    auto it = accs.find(key);
                    if (it == accs.end()) {
                        throw MissingCellsError("lifelong cell missing: grid " +
                                                std::to_string(gi) + " task " + std::to_string(t) +
                                                " perm " + std::to_string(p) + " replicate " +
                                                std::to_string(r));
                    }
                    lifelong_accs.push_back(it->second);
                    lifelong_sum += it->second;
                    ++lifelong_n;
                }
                CellVerdict verdict = cell_verdict(single_accs, lifelong_accs, alpha);
                verdict.task = t;
                verdict.permutation = p;
                gp.verdicts.push_back(verdict);
            }
        }
        gp.mean_single_acc = single_n > 0 ? single_sum / single_n : 0.0;
        gp.mean_lifelong_acc = lifelong_n > 0 ? lifelong_sum / lifelong_n : 0.0;
        gp.summary = pass_rate(gp.verdicts, point.permutations, point.task_names);
        score.points.push_back(std::move(gp));
    }

    // ICL-effectiveness split from the single-task arms of the 1-shot and
    // k-shot grid points, when both exist.
    if (manifest.mode == RunMode::scale_shot) {
        int gi_1 = -1, gi_k = -1;
        for (std::size_t gi = 0; gi < manifest.grid_points.size(); ++gi) {
            if (manifest.grid_points[gi].n_shot == 1) gi_1 = static_cast<int>(gi);
            if (manifest.grid_points[gi].n_shot == icl_kshot) gi_k = static_cast<int>(gi);
        }
        if (gi_1 >= 0 && gi_k >= 0 && gi_1 != gi_k) {
            const auto& point = manifest.grid_points.front();
            std::vector<std::vector<double>> acc1(static_cast<std::size_t>(point.n_task)),
                acck(static_cast<std::size_t>(point.n_task));
            for (int t = 0; t < point.n_task; ++t) {
                for (int r = 0; r < manifest.n_replicates; ++r) {
                    acc1[static_cast<std::size_t>(t)].push_back(accs.at(
                        CellKey{gi_1, -1, static_cast<int>(SettingKind::single_task), -1, r, t}));
                    acck[static_cast<std::size_t>(t)].push_back(accs.at(
                        CellKey{gi_k, -1, static_cast<int>(SettingKind::single_task), -1, r, t}));
                }
            }
            auto effective = icl_effective_tasks(acc1, acck, alpha);
            std::set<int> effective_set(effective.begin(), effective.end());
            json split;
            split["kshot"] = icl_kshot;
            json eff = json::array(), ineff = json::array();
            for (int t = 0; t < point.n_task; ++t) {
                const auto& name = point.task_names[static_cast<std::size_t>(t)];
                if (effective_set.count(t)) eff.push_back(name);
                else ineff.push_back(name);
            }
            split["effective"] = eff;
            split["ineffective"] = ineff;
            // Pass rates per group at the k-shot grid point.
            const auto& gp = score.points[static_cast<std::size_t>(gi_k)];
            double eff_pass = 0.0, ineff_pass = 0.0;
            int eff_n = 0, ineff_n = 0;
            for (const auto& v : gp.verdicts) {
                bool pass = v.verdict != Verdict::FAIL;
                if (effective_set.count(v.task)) {
                    eff_pass += pass;
                    ++eff_n;
                } else {
                    ineff_pass += pass;
                    ++ineff_n;
                }
            }
            split["effective_pass_rate"] = eff_n > 0 ? eff_pass / eff_n : 0.0;
            split["ineffective_pass_rate"] = ineff_n > 0 ? ineff_pass / ineff_n : 0.0;
            score.icl_effectiveness = split;
        }
    }
    return score;
}

void write_verdicts(const RunScore& score, const std::filesystem::path& run_dir) {
    json doc;
    doc["manifest_digest"] = score.manifest_digest;
    doc["alpha"] = score.alpha;
    json points = json::array();
    for (const auto& gp : score.points) {
        json cells = json::array();
        for (const auto& v : gp.verdicts) {
            cells.push_back({{"task", v.task},
                             {"permutation", v.permutation},
                             {"verdict", verdict_name(v.verdict)},
                             {"t_statistic", std::isfinite(v.t_statistic)
                                                 ? json(v.t_statistic)
                                                 : json(v.t_statistic > 0 ? "inf" : "-inf")},
                             {"p_value", v.p_value},
                             {"mean_single", v.mean_single},
                             {"mean_lifelong", v.mean_lifelong},
                             {"n_pairs", v.n_pairs}});
        }
        points.push_back({{"grid_index", gp.grid_index},
                          {"grid_value", gp.grid_value},
                          {"cells", cells}});
    }
    doc["grid_points"] = points;
    write_file(run_dir / "verdicts.json", doc.dump(2) + "\n");
}

nlohmann::json run_summary_json(const RunScore& score, const RunManifest& manifest) {
    json doc;
    doc["run_id"] = manifest.run_id;
    doc["manifest_digest"] = score.manifest_digest;
    doc["mode"] = mode_name(manifest.mode);
    doc["alpha"] = score.alpha;
    json points = json::array();
    for (const auto& gp : score.points) {
        json by_task = json::object();
        for (const auto& [task, rate] : gp.summary.by_task) by_task[task] = rate;
        points.push_back({{"grid_index", gp.grid_index},
                          {"grid_value", gp.grid_value},
                          {"n_task", gp.n_task},
                          {"n_shot", gp.n_shot},
                          {"context_label", token_count_label(gp.mean_context_tokens)},
                          {"mean_context_tokens", gp.mean_context_tokens},
                          {"s_acc", gp.mean_single_acc},
                          {"l_acc", gp.mean_lifelong_acc},
                          {"pass_rate", gp.summary.overall},
                          {"no_match_count", gp.no_match_count},
                          {"by_task", by_task},
                          {"by_index", gp.summary.by_index},
                          {"by_permutation", gp.summary.by_permutation},
                          {"fail_histogram", gp.summary.fail_histogram},
                          {"excel_histogram", gp.summary.excel_histogram}});
    }
    doc["grid_points"] = points;
    if (!score.controlled.empty()) {
        json controlled = json::array();
        for (const auto& cs : score.controlled) {
            json by_task = json::object();
            for (const auto& [task, acc] : cs.by_task) by_task[task] = acc;
            controlled.push_back({{"setting_index", cs.setting_index},
                                  {"setting", cs.setting},
                                  {"repetitions", cs.repetitions},
                                  {"mean_acc", cs.mean_acc},
                                  {"by_task", by_task}});
        }
        doc["controlled"] = controlled;
    }
    if (!score.niah_cells.empty()) {
        json cells = json::array();
        for (const auto& c : score.niah_cells) {
            cells.push_back({{"context_length", c.context_length},
                             {"depth", c.depth},
                             {"recall", c.recall}});
        }
        doc["niah"] = cells;
    }
    if (score.icl_effectiveness) doc["icl_effectiveness"] = *score.icl_effectiveness;
    return doc;
}

void write_summary(const RunScore& score, const RunManifest& manifest,
                   const std::filesystem::path& run_dir) {
    write_file(run_dir / "summary.json", run_summary_json(score, manifest).dump(2) + "\n");
}

HeatmapGrid build_verdict_heatmap(const RunManifest& manifest, const RunScore& score) {
    HeatmapGrid grid;
    grid.title = "pass/fail by context length and depth";
    if (score.points.empty()) throw EmptyGridError();
    int n_task = score.points.front().n_task;
    for (const auto& gp : score.points) n_task = std::max(n_task, gp.n_task);

    for (const auto& gp : score.points) grid.x_labels.push_back(token_count_label(gp.mean_context_tokens));

    // Rows are stream indices; the label is the depth fraction of that
    // position in the largest stream.
    grid.values.assign(static_cast<std::size_t>(n_task),
                       std::vector<double>(score.points.size(),
                                           std::numeric_limits<double>::quiet_NaN()));
    std::vector<double> depth_label(static_cast<std::size_t>(n_task), -1.0);
    for (std::size_t x = 0; x < score.points.size(); ++x) {
        const auto& gp = score.points[x];
        const auto& perms =
            manifest.grid_points[static_cast<std::size_t>(gp.grid_index)].permutations;
        std::vector<double> sums(static_cast<std::size_t>(n_task), 0.0);
        std::vector<int> counts(static_cast<std::size_t>(n_task), 0);
        for (const auto& v : gp.verdicts) {
            const auto& perm = perms.at(static_cast<std::size_t>(v.permutation));
            auto it = std::find(perm.begin(), perm.end(), v.task);
            auto pos = static_cast<std::size_t>(it - perm.begin());
            sums[pos] += verdict_score(v.verdict);
            counts[pos] += 1;
        }
        for (std::size_t y = 0; y < static_cast<std::size_t>(n_task); ++y) {
            if (counts[y] > 0) {
                grid.values[y][x] = sums[y] / counts[y];
                double d = static_cast<double>(y) / static_cast<double>(gp.n_task);
                depth_label[y] = std::max(depth_label[y], d);
            }
        }
    }
    for (std::size_t y = 0; y < static_cast<std::size_t>(n_task); ++y) {
        grid.y_labels.push_back(fmt(depth_label[y] < 0 ? 0.0 : depth_label[y], 2));
    }
    return grid;
}

HeatmapGrid build_niah_heatmap(const RunManifest& manifest, const RunScore& score) {
    HeatmapGrid grid;
    grid.continuous = true;
    grid.title = "token recall by context length and depth";
    for (int len : manifest.niah.context_lengths) grid.x_labels.push_back(std::to_string(len));
    for (double d : manifest.niah.depths) grid.y_labels.push_back(fmt(d, 2));
    grid.values.assign(manifest.niah.depths.size(),
                       std::vector<double>(manifest.niah.context_lengths.size(),
                                           std::numeric_limits<double>::quiet_NaN()));
    for (const auto& cell : score.niah_cells) {
        grid.values.at(static_cast<std::size_t>(cell.depth_index))
            .at(static_cast<std::size_t>(cell.length_index)) = cell.recall;
    }
    return grid;
}

void emit_heatmap(const HeatmapGrid& grid, const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path) {
    if (grid.x_labels.empty() || grid.y_labels.empty()) throw EmptyGridError();

    std::string csv = "x,y,value\n";
    for (std::size_t y = 0; y < grid.y_labels.size(); ++y) {
        for (std::size_t x = 0; x < grid.x_labels.size(); ++x) {
            double v = grid.values[y][x];
            csv += grid.x_labels[x] + "," + grid.y_labels[y] + "," +
                   (std::isnan(v) ? "NA" : fmt(v)) + "\n";
        }
    }
    write_file(csv_path, csv);

    const int cell = 28, left = 70, top = 40, bottom = 30;
    int width = left + cell * static_cast<int>(grid.x_labels.size()) + 20;
    int height = top + cell * static_cast<int>(grid.y_labels.size()) + bottom;
    SvgWriter svg(width, height);
    svg.text(8, 20, grid.title, 12);
    for (std::size_t y = 0; y < grid.y_labels.size(); ++y) {
        svg.text(left - 6, top + cell * static_cast<double>(y) + cell * 0.65,
                 grid.y_labels[y], 9, "end");
        for (std::size_t x = 0; x < grid.x_labels.size(); ++x) {
            double v = grid.values[y][x];
            bool na = std::isnan(v);
            double mapped = grid.continuous ? 2.0 * v - 1.0 : v;
            svg.rect(left + cell * static_cast<double>(x), top + cell * static_cast<double>(y),
                     cell, cell, color_for(na ? 0.0 : mapped, na));
        }
    }
    for (std::size_t x = 0; x < grid.x_labels.size(); ++x) {
        svg.text(left + cell * static_cast<double>(x) + cell / 2.0,
                 top + cell * static_cast<double>(grid.y_labels.size()) + 16,
                 grid.x_labels[x], 9, "middle");
    }
    write_file(svg_path, svg.finish());
}

void emit_diagnostic_report(const RunManifest& manifest, const RunScore& score,
                            const std::filesystem::path& csv_path,
                            const std::filesystem::path& svg_path) {
    if (score.points.empty()) throw MissingCellsError("no scored grid points");

    // CSV: every grid point, one row per (task, index) pair that appears in
    // a sampled permutation, plus permutation strips and marginals.
    std::string csv = "grid_value,section,row,col,value\n";
    for (const auto& gp : score.points) {
        const auto& point = manifest.grid_points[static_cast<std::size_t>(gp.grid_index)];
        const auto& perms = point.permutations;
        std::string gl = std::to_string(gp.grid_value);
        for (const auto& v : gp.verdicts) {
            const auto& perm = perms.at(static_cast<std::size_t>(v.permutation));
            auto it = std::find(perm.begin(), perm.end(), v.task);
            auto pos = static_cast<long>(it - perm.begin());
            csv += gl + ",matrix," + point.task_names[static_cast<std::size_t>(v.task)] + "," +
                   std::to_string(pos) + "," + verdict_name(v.verdict) + "\n";
        }
        for (const auto& v : gp.verdicts) {
            const auto& perm = perms.at(static_cast<std::size_t>(v.permutation));
            auto it = std::find(perm.begin(), perm.end(), v.task);
            auto pos = static_cast<long>(it - perm.begin());
            csv += gl + ",permutation,p" + std::to_string(v.permutation) + "," +
                   std::to_string(pos) + "," + verdict_name(v.verdict) + "\n";
        }
        for (const auto& [task, rate] : gp.summary.by_task) {
            csv += gl + ",by_task," + task + ",," + fmt(rate) + "\n";
        }
        for (std::size_t i = 0; i < gp.summary.by_index.size(); ++i) {
            csv += gl + ",by_index," + std::to_string(i) + ",," + fmt(gp.summary.by_index[i]) + "\n";
        }
        for (std::size_t p = 0; p < gp.summary.by_permutation.size(); ++p) {
            csv += gl + ",by_permutation,p" + std::to_string(p) + ",," +
                   fmt(gp.summary.by_permutation[p]) + "\n";
        }
    }
    write_file(csv_path, csv);

    // SVG: the last grid point (longest context).
    const auto& gp = score.points.back();
    const auto& point = manifest.grid_points[static_cast<std::size_t>(gp.grid_index)];
    const auto& perms = point.permutations;
    const int n = gp.n_task;
    const int P = manifest.n_permutations;
    const int cell = 18, left = 170, top = 46;
    const int strip_top = top + cell * n + 30 + cell; // below index marginal
    const int hist_top = strip_top + cell * P + 40;
    int width = left + cell * n + 120;
    int height = hist_top + 120;
    SvgWriter svg(width, height);
    svg.text(8, 18, "diagnostic report (grid value " + std::to_string(gp.grid_value) + ", " +
                        std::to_string(n) + " tasks)", 12);
    svg.text(8, 34, "rows: task; columns: stream index; red FAIL, white PASS, blue EXCEL, grey N/A",
             9);

    // Main matrix: mean verdict score per (task, index); grey when the task
    // never lands on that index in the sampled permutations.
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<std::vector<int>> counts(static_cast<std::size_t>(n),
                                         std::vector<int>(static_cast<std::size_t>(n), 0));
    for (const auto& v : gp.verdicts) {
        const auto& perm = perms.at(static_cast<std::size_t>(v.permutation));
        auto it = std::find(perm.begin(), perm.end(), v.task);
        auto pos = static_cast<std::size_t>(it - perm.begin());
        sums[static_cast<std::size_t>(v.task)][pos] += verdict_score(v.verdict);
        counts[static_cast<std::size_t>(v.task)][pos] += 1;
    }
    for (int t = 0; t < n; ++t) {
        svg.text(left - 6, top + cell * t + cell * 0.7,
                 point.task_names[static_cast<std::size_t>(t)], 9, "end");
        for (int i = 0; i < n; ++i) {
            bool na = counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] == 0;
            double v = na ? 0.0
                          : sums[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] /
                                counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
            svg.rect(left + cell * i, top + cell * t, cell, cell, color_for(v, na));
        }
        // Per-task marginal at the right.
        double rate = gp.summary.by_task.at(point.task_names[static_cast<std::size_t>(t)]);
        svg.rect(left + cell * n + 14, top + cell * t, cell, cell, color_for(2.0 * rate - 1.0, false));
        svg.text(left + cell * n + 14 + cell + 4, top + cell * t + cell * 0.7, fmt(rate, 2), 8);
    }
    // Per-index marginal below the matrix.
    for (int i = 0; i < n; ++i) {
        double rate = gp.summary.by_index[static_cast<std::size_t>(i)];
        svg.rect(left + cell * i, top + cell * n + 10, cell, cell, color_for(2.0 * rate - 1.0, false));
        svg.text(left + cell * i + cell / 2.0, top + cell * n + 10 + cell + 10,
                 std::to_string(i), 7, "middle");
    }
    // Permutation strips.
    svg.text(8, strip_top - 6, "per-permutation strips", 10);
    for (int p = 0; p < P; ++p) {
        svg.text(left - 6, strip_top + cell * p + cell * 0.7, "perm " + std::to_string(p), 9, "end");
        for (const auto& v : gp.verdicts) {
            if (v.permutation != p) continue;
            const auto& perm = perms.at(static_cast<std::size_t>(p));
            auto it = std::find(perm.begin(), perm.end(), v.task);
            auto pos = static_cast<long>(it - perm.begin());
            svg.rect(left + cell * static_cast<double>(pos), strip_top + cell * p, cell, cell,
                     color_for(verdict_score(v.verdict), false));
        }
    }
    // Fail / excel histograms.
    svg.text(8, hist_top - 6, "tasks by #fail (left) and #excel (right) across permutations", 10);
    const int bar_w = 22;
    for (std::size_t b = 0; b < gp.summary.fail_histogram.size(); ++b) {
        int count = gp.summary.fail_histogram[b];
        double h = 6.0 * count;
        svg.rect(left + static_cast<double>(b) * bar_w, hist_top + 60 - h, bar_w - 4, h, "#d64541");
        svg.text(left + static_cast<double>(b) * bar_w + (bar_w - 4) / 2.0, hist_top + 72,
                 std::to_string(b) + "/" + std::to_string(P), 8, "middle");
    }
    double excel_x0 = left + static_cast<double>(gp.summary.fail_histogram.size()) * bar_w + 40;
    for (std::size_t b = 0; b < gp.summary.excel_histogram.size(); ++b) {
        int count = gp.summary.excel_histogram[b];
        double h = 6.0 * count;
        svg.rect(excel_x0 + static_cast<double>(b) * bar_w, hist_top + 60 - h, bar_w - 4, h, "#4a69bd");
        svg.text(excel_x0 + static_cast<double>(b) * bar_w + (bar_w - 4) / 2.0, hist_top + 72,
                 std::to_string(b) + "/" + std::to_string(P), 8, "middle");
    }
    write_file(svg_path, svg.finish());
}

void emit_histogram_csv(const RunScore& score, const std::filesystem::path& csv_path) {
    std::string csv = "grid_value,kind,count,n_tasks\n";
    for (const auto& gp : score.points) {
        for (std::size_t b = 0; b < gp.summary.fail_histogram.size(); ++b) {
            csv += std::to_string(gp.grid_value) + ",fail," + std::to_string(b) + "," +
                   std::to_string(gp.summary.fail_histogram[b]) + "\n";
        }
        for (std::size_t b = 0; b < gp.summary.excel_histogram.size(); ++b) {
            csv += std::to_string(gp.grid_value) + ",excel," + std::to_string(b) + "," +
                   std::to_string(gp.summary.excel_histogram[b]) + "\n";
        }
    }
    write_file(csv_path, csv);
}

} // namespace haystack
