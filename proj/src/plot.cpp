#include "graphbandit/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "graphbandit/error.hpp"

namespace graphbandit {

namespace {

constexpr std::array<const char*, 6> kColours = {"#1f77b4", "#d62728", "#2ca02c",
                                                 "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double x) {
  std::ostringstream ss;
  ss.precision(2);
  ss << std::fixed << x;
  return ss.str();
}

std::string tick(double x) {
  std::ostringstream ss;
  ss.precision(4);
  ss << x;
  return ss.str();
}

}  // namespace

std::string line_chart_svg(const std::vector<PlotSeries>& series, const PlotOptions& opt) {
  if (series.empty()) throw InvalidArgument("plot: no series");
  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    if (!s.band.empty() && s.band.size() != s.mean.size())
      throw LengthMismatch("plot: band length differs from series");
    n = std::max(n, s.mean.size());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double b = s.band.empty() ? 0.0 : s.band[i];
      lo = std::min(lo, s.mean[i] - b);
      hi = std::max(hi, s.mean[i] + b);
    }
  }
  if (n == 0) throw InvalidArgument("plot: empty series");
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }

  const double left = 64, right = 16, top = 32, bottom = 48;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto sx = [&](std::size_t i) { return left + (n > 1 ? pw * double(i) / double(n - 1) : pw / 2); };
  auto sy = [&](double y) { return top + ph * (hi - y) / (hi - lo); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
     << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(opt.width / 2.0) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(opt.title) << "</text>\n";
  os << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << num(left) << "\" y=\"" << num(top)
     << "\" width=\"" << num(pw) << "\" height=\"" << num(ph) << "\"/></g>\n";

  os << "<g font-size=\"10\" fill=\"black\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(sy(y) + 3) << "\" text-anchor=\"end\">"
       << tick(y) << "</text>\n";
    const std::size_t i = (n - 1) * static_cast<std::size_t>(k) / 4;
    os << "<text x=\"" << num(sx(i)) << "\" y=\"" << num(top + ph + 14)
       << "\" text-anchor=\"middle\">" << (i + 1) << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(opt.height - 10.0)
     << "\" text-anchor=\"middle\">" << escape(opt.x_label) << "</text>\n";
  os << "<text transform=\"translate(14," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(opt.y_label) << "</text>\n</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kColours[k % kColours.size()];
    if (!s.band.empty() && !s.mean.empty()) {
      os << "<polygon fill=\"" << colour << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.mean.size(); ++i)
        os << num(sx(i)) << ',' << num(sy(s.mean[i] + s.band[i])) << ' ';
      for (std::size_t i = s.mean.size(); i-- > 0;)
        os << num(sx(i)) << ',' << num(sy(s.mean[i] - s.band[i])) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.mean.size(); ++i) os << num(sx(i)) << ',' << num(sy(s.mean[i])) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << num(left + 8) << "\" y=\"" << num(top + 14 + 14.0 * double(k))
       << "\" font-size=\"11\" fill=\"" << colour << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace graphbandit
