#include "mhfa/eval/output.hpp"

#include <map>

#include "mhfa/core/text.hpp"

namespace mhfa::eval {

namespace {

constexpr double kWidth = 480, kHeight = 320, kMargin = 40;

std::string num(double v) { return format_rounded(v, 2); }

std::string svg_open(std::string_view title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\">" + std::string(title) + "</text>\n";
    s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" + num(kWidth - kMargin) +
         "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(kMargin) + "\" y2=\"" +
         num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
    return s;
}

}  // namespace

std::string tone_curve_csv(const ToneResult& tone) {
    std::string out = "mood,sentiment\n";
    for (const auto& p : tone.curve) out += format_number(p.mood) + "," + format_number(p.sentiment) + "\n";
    return out;
}

std::string recall_csv(const std::vector<RecallReport>& reports) {
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ";") + x;
        return s;
    };
    std::string out = "scenario,indicators_expected,indicators_mentioned,recall_fraction\n";
    for (const auto& r : reports) {
        out += csv_escape(r.scenario) + "," + csv_escape(join(r.indicators_expected)) + "," +
               csv_escape(join(r.indicators_mentioned)) + "," + format_number(r.recall_fraction) + "\n";
    }
    return out;
}

std::string tone_curve_svg(const ToneResult& tone) {
    auto x = [](double mood) { return kMargin + (mood - 1) / 4 * (kWidth - 2 * kMargin); };
    auto y = [](double s) { return kHeight - kMargin - s / 5 * (kHeight - 2 * kMargin); };
    std::string s = svg_open("Reply sentiment vs mood");
    s += "<line x1=\"" + num(x(3)) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(x(3)) + "\" y2=\"" +
         num(kHeight - kMargin) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (int m = 1; m <= 5; ++m) {
        s += "<text x=\"" + num(x(m)) + "\" y=\"" + num(kHeight - kMargin + 14) + "\" text-anchor=\"middle\">" +
             std::to_string(m) + "</text>\n";
    }
    for (int v = 0; v <= 5; ++v) {
        s += "<text x=\"" + num(kMargin - 6) + "\" y=\"" + num(y(v) + 4) + "\" text-anchor=\"end\">" +
             std::to_string(v) + "</text>\n";
    }
    for (const auto& p : tone.curve) {
        s += "<circle cx=\"" + num(x(p.mood)) + "\" cy=\"" + num(y(p.sentiment)) + "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

std::string recall_svg(const std::vector<RecallReport>& reports) {
    std::map<std::string, std::pair<double, int>> agg;
    for (const auto& r : reports) {
        agg[r.scenario].first += r.recall_fraction;
        agg[r.scenario].second += 1;
    }
    std::string s = svg_open("Behavior recall by scenario");
    const double slot = agg.empty() ? 0 : (kWidth - 2 * kMargin) / static_cast<double>(agg.size());
    double xi = kMargin;
    for (const auto& [scenario, sum_n] : agg) {
        const double mean = sum_n.first / sum_n.second;
        const double h = mean * (kHeight - 2 * kMargin);
        s += "<rect x=\"" + num(xi + slot * 0.15) + "\" y=\"" + num(kHeight - kMargin - h) + "\" width=\"" +
             num(slot * 0.7) + "\" height=\"" + num(h) + "\" fill=\"steelblue\"/>\n";
        s += "<text x=\"" + num(xi + slot / 2) + "\" y=\"" + num(kHeight - kMargin + 14) +
             "\" text-anchor=\"middle\">" + scenario + "</text>\n";
        s += "<text x=\"" + num(xi + slot / 2) + "\" y=\"" + num(kHeight - kMargin - h - 4) +
             "\" text-anchor=\"middle\">" + format_rounded(mean, 2) + "</text>\n";
        xi += slot;
    }
    s += "</svg>\n";
    return s;
}

}  // namespace mhfa::eval
