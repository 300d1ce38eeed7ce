#include "vdrisk/svg.hpp"

#include <cmath>

#include "vdrisk/errors.hpp"
#include "vdrisk/textio.hpp"

namespace vdrisk::svg {

namespace {

// Fixed geometry: 800x500 viewport with margins for axes and legend.
constexpr double kWidth = 800.0, kHeight = 500.0;
constexpr double kLeft = 70.0, kRight = 780.0, kTop = 50.0, kBottom = 450.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};
constexpr int kPaletteSize = 6;

std::string num(double v) { return textio::fmt_fixed(v, 2); }

std::string header(const std::string& title) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" "
       "viewBox=\"0 0 800 500\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">" + title + "</text>\n";
  return s;
}

std::string axes(const std::string& x_label, const std::string& y_label, double x_max,
                 int x_decimals) {
  std::string s;
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(kRight) +
       "\" y2=\"" + num(kBottom) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
       "\" y2=\"" + num(kBottom) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double frac = static_cast<double>(i) / 4.0;
    double x = kLeft + frac * (kRight - kLeft);
    double y = kBottom - frac * (kBottom - kTop);
    s += "<line x1=\"" + num(x) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(x) + "\" y2=\"" +
         num(kBottom + 5) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + num(x) + "\" y=\"" + num(kBottom + 20) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         textio::fmt_fixed(frac * x_max, x_decimals) + "</text>\n";
    s += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(y) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + num(kLeft - 10) + "\" y=\"" + num(y + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
         textio::fmt_fixed(frac, 2) + "</text>\n";
  }
  s += "<text x=\"" + num((kLeft + kRight) / 2) + "\" y=\"" + num(kBottom + 40) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
       "</text>\n";
  s += "<text x=\"18\" y=\"" + num((kTop + kBottom) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 18 " + num((kTop + kBottom) / 2) + ")\">" + y_label +
       "</text>\n";
  return s;
}

std::string legend_entry(std::size_t i, const std::string& label) {
  double y = kTop + 16.0 + 20.0 * static_cast<double>(i);
  const char* color = kPalette[i % kPaletteSize];
  std::string s;
  s += "<line x1=\"" + num(kRight - 180) + "\" y1=\"" + num(y - 4) + "\" x2=\"" +
       num(kRight - 150) + "\" y2=\"" + num(y - 4) + "\" stroke=\"" + color +
       "\" stroke-width=\"2\"/>\n";
  s += "<text x=\"" + num(kRight - 142) + "\" y=\"" + num(y) +
       "\" font-family=\"sans-serif\" font-size=\"12\">" + label + "</text>\n";
  return s;
}

}  // namespace

std::string km_plot(const std::vector<LabeledKmCurve>& curves, double max_days,
                    const std::string& title) {
  if (curves.empty()) throw InvalidInputError("no curves to plot");
  if (!(max_days > 0.0)) throw InvalidInputError("plot horizon must be positive");

  const auto x_of = [&](double t) { return kLeft + (t / max_days) * (kRight - kLeft); };
  const auto y_of = [&](double s) { return kBottom - s * (kBottom - kTop); };

  std::string out = header(title);
  out += axes("days", "survival", max_days, 0);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const survival::KmCurve& c = *curves[i].curve;
    std::string d = "M " + num(x_of(0.0)) + " " + num(y_of(1.0));
    double s = 1.0;
    for (const auto& step : c.steps) {
      if (step.time > max_days) break;
      d += " H " + num(x_of(step.time));
      s = step.survival;
      d += " V " + num(y_of(s));
    }
    d += " H " + num(x_of(max_days));
    out += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" +
           kPalette[i % kPaletteSize] + "\" stroke-width=\"2\"/>\n";
    out += legend_entry(i, curves[i].label);
  }
  out += "</svg>\n";
  return out;
}

std::string roc_plot(const std::vector<LabeledRocCurve>& curves, const std::string& title) {
  if (curves.empty()) throw InvalidInputError("no curves to plot");

  const auto x_of = [&](double f) { return kLeft + f * (kRight - kLeft); };
  const auto y_of = [&](double t) { return kBottom - t * (kBottom - kTop); };

  std::string out = header(title);
  out += axes("false positive rate", "true positive rate", 1.0, 2);
  out += "<line x1=\"" + num(x_of(0.0)) + "\" y1=\"" + num(y_of(0.0)) + "\" x2=\"" +
         num(x_of(1.0)) + "\" y2=\"" + num(y_of(1.0)) +
         "\" stroke=\"#999999\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const discrimination::RocCurve& c = *curves[i].curve;
    std::string d;
    for (std::size_t k = 0; k < c.points.size(); ++k) {
      d += (k == 0 ? "M " : " L ");
      d += num(x_of(c.points[k].fpr)) + " " + num(y_of(c.points[k].tpr));
    }
    out += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" +
           kPalette[i % kPaletteSize] + "\" stroke-width=\"2\"/>\n";
    out += legend_entry(i, curves[i].label + " (AUC " + textio::fmt_fixed(c.auc, 3) + ")");
  }
  out += "</svg>\n";
  return out;
}

}  // namespace vdrisk::svg
