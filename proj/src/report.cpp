#include "defersim/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "defersim/errors.hpp"

namespace defersim {

namespace {

void put_double(std::ofstream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void save_reports(const std::vector<ReportRow>& rows, const std::string& path,
                  const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write reports: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "pool,batch_size,deferral_rate,absence_rate,distribution,seed,policy,"
         "n_fp,n_fn,n_tp,n_tn,loss,fpr,tpr,pe\n";
  for (const auto& r : rows) {
    out << to_string(r.pool) << ',' << r.batch_size << ',';
    put_double(out, r.deferral_rate);
    out << ',';
    put_double(out, r.absence_rate);
    out << ',' << to_string(r.distribution) << ',' << r.seed << ',' << r.policy
        << ',' << r.n_fp << ',' << r.n_fn << ',' << r.n_tp << ',' << r.n_tn
        << ',';
    put_double(out, r.loss);
    out << ',';
    put_double(out, r.fpr);
    out << ',';
    put_double(out, r.tpr);
    out << ',';
    put_double(out, r.pe);
    out << "\n";
  }
}

std::vector<ReportRow> load_reports(const std::string& path,
                                    std::string* header_comment) {
  std::ifstream in(path);
  if (!in) throw staleness_error("reports file missing: " + path);
  std::vector<ReportRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header_comment) *header_comment = line.substr(line.size() > 1 ? 2 : 1);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 15) throw parse_error("reports row: expected 15 columns");
    ReportRow r;
    r.pool = expert_pool_from_string(cells[0]);
    r.batch_size = std::stoi(cells[1]);
    r.deferral_rate = std::stod(cells[2]);
    r.absence_rate = std::stod(cells[3]);
    r.distribution = capacity_distribution_from_string(cells[4]);
    r.seed = std::stoull(cells[5]);
    r.policy = cells[6];
    r.n_fp = std::stol(cells[7]);
    r.n_fn = std::stol(cells[8]);
    r.n_tp = std::stol(cells[9]);
    r.n_tn = std::stol(cells[10]);
    r.loss = std::stod(cells[11]);
    r.fpr = std::stod(cells[12]);
    r.tpr = std::stod(cells[13]);
    r.pe = std::stod(cells[14]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> summarize_reports(const std::vector<ReportRow>& rows) {
  struct Acc {
    SummaryRow row;
    std::vector<double> loss, pe, fpr, tpr;
    std::size_t first_seen;
  };
  std::map<std::string, Acc> acc;
  std::size_t counter = 0;
  for (const auto& r : rows) {
    char key[200];
    std::snprintf(key, sizeof(key), "%s|%d|%.10g|%.10g|%s|%s",
                  to_string(r.pool), r.batch_size, r.deferral_rate,
                  r.absence_rate, to_string(r.distribution), r.policy.c_str());
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) {
      it->second.row.pool = r.pool;
      it->second.row.batch_size = r.batch_size;
      it->second.row.deferral_rate = r.deferral_rate;
      it->second.row.absence_rate = r.absence_rate;
      it->second.row.distribution = r.distribution;
      it->second.row.policy = r.policy;
      it->second.first_seen = counter++;
    }
    it->second.loss.push_back(r.loss);
    it->second.pe.push_back(r.pe);
    it->second.fpr.push_back(r.fpr);
    it->second.tpr.push_back(r.tpr);
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto stddev = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };

  std::vector<const Acc*> ordered;
  ordered.reserve(acc.size());
  for (const auto& [k, a] : acc) ordered.push_back(&a);
  std::sort(ordered.begin(), ordered.end(),
            [](const Acc* a, const Acc* b) { return a->first_seen < b->first_seen; });

  std::vector<SummaryRow> out;
  out.reserve(ordered.size());
  for (const Acc* a : ordered) {
    SummaryRow s = a->row;
    s.n_seeds = static_cast<int>(a->loss.size());
    s.loss_mean = mean(a->loss);
    s.loss_std = stddev(a->loss);
    s.pe_mean = mean(a->pe);
    s.pe_std = stddev(a->pe);
    s.fpr_mean = mean(a->fpr);
    s.tpr_mean = mean(a->tpr);
    out.push_back(std::move(s));
  }
  return out;
}

void save_summary(const std::vector<SummaryRow>& rows, const std::string& path,
                  const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write summary: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "pool,batch_size,deferral_rate,absence_rate,distribution,policy,"
         "n_seeds,loss_mean,loss_std,pe_mean,pe_std,fpr_mean,tpr_mean\n";
  for (const auto& r : rows) {
    out << to_string(r.pool) << ',' << r.batch_size << ',';
    put_double(out, r.deferral_rate);
    out << ',';
    put_double(out, r.absence_rate);
    out << ',' << to_string(r.distribution) << ',' << r.policy << ','
        << r.n_seeds << ',';
    put_double(out, r.loss_mean);
    out << ',';
    put_double(out, r.loss_std);
    out << ',';
    put_double(out, r.pe_mean);
    out << ',';
    put_double(out, r.pe_std);
    out << ',';
    put_double(out, r.fpr_mean);
    out << ',';
    put_double(out, r.tpr_mean);
    out << "\n";
  }
}

}  // namespace defersim
