#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "silp/eval.hpp"

namespace silp::eval {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Minimal line plot: one series over the aggregate buckets.
void write_svg(const std::string& path, const std::string& title, const std::string& y_label,
               const std::vector<Aggregate>& agg, double Aggregate::*field) {
  const int w = 560, h = 360, ml = 64, mr = 20, mt = 40, mb = 48;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& a : agg) {
    xmin = std::min(xmin, a.snr_bucket_db);
    xmax = std::max(xmax, a.snr_bucket_db);
    ymin = std::min(ymin, a.*field);
    ymax = std::max(ymax, a.*field);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.08 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
  // axes
  f << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  f << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">input SNR (dB)</text>\n";
  f << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << (mt + h - mb) / 2 << ")\">" << y_label << "</text>\n";
  // ticks
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", xv);
    f << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16
      << "\" text-anchor=\"middle\" font-size=\"10\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", yv);
    f << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 3
      << "\" text-anchor=\"end\" font-size=\"10\">" << buf << "</text>\n";
  }
  // polyline + markers
  f << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
  for (const auto& a : agg) f << px(a.snr_bucket_db) << "," << py(a.*field) << " ";
  f << "\"/>\n";
  for (const auto& a : agg)
    f << "<circle cx=\"" << px(a.snr_bucket_db) << "\" cy=\"" << py(a.*field)
      << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
  f << "</svg>\n";
}

json record_json(const PairRecord& r) {
  return {{"id", r.id},
          {"input_snr_db", r.input_snr_db},
          {"snr_bucket_db", r.snr_bucket_db},
          {"dfw_left_db", r.dfw_left_db},
          {"dfw_right_db", r.dfw_right_db},
          {"ild_error_db", r.ild_error_db},
          {"ipd_error_rad", r.ipd_error_rad},
          {"stoi_left", r.stoi_left},
          {"stoi_right", r.stoi_right}};
}

}  // namespace

void emit_report(const EvalReport& report, const std::string& dir) {
  if (report.records.empty()) throw std::invalid_argument("emit_report: empty report");
  fs::create_directories(dir);

  {  // CSV: per-utterance rows then aggregate rows
    std::ofstream f(fs::path(dir) / "report.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("report: cannot write report.csv");
    f << "kind,id,input_snr_db,snr_bucket_db,dfw_left_db,dfw_right_db,ild_error_db,"
         "ipd_error_rad,stoi_left,stoi_right\n";
    f.precision(10);
    for (const auto& r : report.records)
      f << "utterance," << r.id << "," << r.input_snr_db << "," << r.snr_bucket_db << ","
        << r.dfw_left_db << "," << r.dfw_right_db << "," << r.ild_error_db << ","
        << r.ipd_error_rad << "," << r.stoi_left << "," << r.stoi_right << "\n";
    for (const auto& a : report.aggregates)
      f << "aggregate,bucket_" << a.snr_bucket_db << ",," << a.snr_bucket_db << "," << a.dfw_db
        << "," << a.dfw_db << "," << a.ild_error_db << "," << a.ipd_error_rad << "," << a.stoi
        << "," << a.stoi << "\n";
  }

  {  // JSON
    json j;
    j["version"] = 1;
    // per-ear STOI average stands in for the binaural intelligibility
    // metric; values are not comparable to published MBSTOI numbers
    j["stoi_note"] = "mean of per-ear STOI; not an MBSTOI substitute metric";
    json recs = json::array();
    for (const auto& r : report.records) recs.push_back(record_json(r));
    j["records"] = recs;
    json aggs = json::array();
    for (const auto& a : report.aggregates)
      aggs.push_back({{"snr_bucket_db", a.snr_bucket_db},
                      {"count", a.count},
                      {"dfw_db", a.dfw_db},
                      {"ild_error_db", a.ild_error_db},
                      {"ipd_error_rad", a.ipd_error_rad},
                      {"stoi", a.stoi}});
    j["aggregates"] = aggs;
    std::ofstream f(fs::path(dir) / "report.json", std::ios::trunc);
    f << j.dump(2) << "\n";
  }

  write_svg((fs::path(dir) / "dfwsegsnr.svg").string(), "fwSegSNR improvement",
            "delta fwSegSNR (dB)", report.aggregates, &Aggregate::dfw_db);
  write_svg((fs::path(dir) / "ild_error.svg").string(), "ILD error", "ILD error (dB)",
            report.aggregates, &Aggregate::ild_error_db);
  write_svg((fs::path(dir) / "ipd_error.svg").string(), "IPD error", "IPD error (rad)",
            report.aggregates, &Aggregate::ipd_error_rad);
  write_svg((fs::path(dir) / "stoi.svg").string(), "Mean per-ear STOI", "STOI",
            report.aggregates, &Aggregate::stoi);
}

EvalReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("report: cannot open " + path);
  json j = json::parse(f);
  EvalReport out;
  for (const auto& e : j.at("records")) {
    PairRecord r;
    r.id = e.at("id").get<std::string>();
    r.input_snr_db = e.at("input_snr_db").get<double>();
    r.snr_bucket_db = e.at("snr_bucket_db").get<double>();
    r.dfw_left_db = e.at("dfw_left_db").get<double>();
    r.dfw_right_db = e.at("dfw_right_db").get<double>();
    r.ild_error_db = e.at("ild_error_db").get<double>();
    r.ipd_error_rad = e.at("ipd_error_rad").get<double>();
    r.stoi_left = e.at("stoi_left").get<double>();
    r.stoi_right = e.at("stoi_right").get<double>();
    out.records.push_back(std::move(r));
  }
  for (const auto& e : j.at("aggregates")) {
    Aggregate a;
    a.snr_bucket_db = e.at("snr_bucket_db").get<double>();
    a.count = e.at("count").get<int>();
    a.dfw_db = e.at("dfw_db").get<double>();
    a.ild_error_db = e.at("ild_error_db").get<double>();
    a.ipd_error_rad = e.at("ipd_error_rad").get<double>();
    a.stoi = e.at("stoi").get<double>();
    out.aggregates.push_back(a);
  }
  return out;
}

}  // namespace silp::eval
