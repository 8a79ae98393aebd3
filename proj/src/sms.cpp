#include "pichain/sms.hpp"

#include <absl/time/civil_time.h>

#include <charconv>
#include <vector>

namespace pichain {

HomeTimeZone HomeTimeZone::utc() { return HomeTimeZone("UTC", absl::UTCTimeZone()); }

HomeTimeZone HomeTimeZone::load(const std::string& name) {
  if (name == "UTC") return utc();
  absl::TimeZone tz;
  if (!absl::LoadTimeZone(name, &tz)) throw std::invalid_argument("unknown time zone: " + name);
  return HomeTimeZone(name, tz);
}

std::int64_t HomeTimeZone::to_epoch(const CivilDate& date, const ClockTime& time) const {
  absl::CivilSecond cs(date.year, date.month, date.day, time.hour, time.minute, time.second);
  return absl::ToUnixSeconds(absl::FromCivil(cs, tz_));
}

std::pair<CivilDate, ClockTime> HomeTimeZone::from_epoch(std::int64_t epoch) const {
  auto cs = absl::ToCivilSecond(absl::FromUnixSeconds(epoch), tz_);
  return {CivilDate{cs.day(), cs.month(), static_cast<int>(cs.year())},
          ClockTime{cs.hour(), cs.minute(), cs.second()}};
}

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::GrammarMismatch: return "GrammarMismatch";
    case ParseErrorKind::FieldOutOfRange: return "FieldOutOfRange";
    case ParseErrorKind::BadDate: return "BadDate";
  }
  return "Unknown";
}

namespace {

[[noreturn]] void grammar(const std::string& field, const std::string& detail) {
  throw SmsParseError(ParseErrorKind::GrammarMismatch, field, "grammar mismatch in " + field + ": " + detail);
}

[[noreturn]] void out_of_range(const std::string& field) {
  throw SmsParseError(ParseErrorKind::FieldOutOfRange, field, field + " out of range");
}

bool is_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

// Signed decimal -> micro-degrees. Range is checked before canonical shape so an
// out-of-range value like "91.0" reports the range rather than the formatting.
std::int64_t parse_coordinate(std::string_view tok, const std::string& field, std::int64_t limit_e6) {
  std::string_view s = tok;
  bool negative = !s.empty() && s.front() == '-';
  if (negative) s.remove_prefix(1);
  auto dot = s.find('.');
  if (dot == std::string_view::npos) grammar(field, "missing decimal point");
  auto whole = s.substr(0, dot);
  auto frac = s.substr(dot + 1);
  if (!is_digits(whole) || !is_digits(frac)) grammar(field, "not a signed decimal");

  auto first_nonzero = whole.find_first_not_of('0');
  std::string_view significant = first_nonzero == std::string_view::npos ? "0" : whole.substr(first_nonzero);
  const std::int64_t limit_whole = limit_e6 / kMicroDegreesPerDegree;
  if (significant.size() > 3) out_of_range(field);
  std::int64_t whole_v = 0;
  std::from_chars(significant.data(), significant.data() + significant.size(), whole_v);
  bool frac_nonzero = frac.find_first_not_of('0') != std::string_view::npos;
  if (whole_v > limit_whole || (whole_v == limit_whole && frac_nonzero)) out_of_range(field);

  if (frac.size() != 6) grammar(field, "expected exactly six decimals");
  if (whole.size() > 1 && whole.front() == '0') grammar(field, "leading zero");
  std::int64_t frac_v = 0;
  std::from_chars(frac.data(), frac.data() + frac.size(), frac_v);
  std::int64_t value = whole_v * kMicroDegreesPerDegree + frac_v;
  if (negative && value == 0) grammar(field, "negative zero");
  return negative ? -value : value;
}

std::vector<std::string_view> split_exact(std::string_view s, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

LocationReport parse_sms(const RawSms& raw, const HomeTimeZone& tz) {
  if (!is_valid_imei(raw.imei)) out_of_range("imei");
  if (!is_valid_phone(raw.from_phone)) out_of_range("phone");
  if (raw.body.size() > kMaxSmsBody) grammar("body", "longer than one SMS");

  auto fields = split_exact(raw.body, ',');
  if (fields.size() != 4) grammar("body", "expected four comma-separated fields");

  LocationReport r;
  r.imei = raw.imei;
  r.phone = raw.from_phone;
  r.lat_e6 = parse_coordinate(fields[0], "lat", kMaxLatE6);
  r.lon_e6 = parse_coordinate(fields[1], "lon", kMaxLonE6);

  auto t = clock_time_from_text(fields[2]);
  if (!t) grammar("time", "expected HH:MM:SS");
  if (t->hour > 23) out_of_range("hour");
  if (t->minute > 59) out_of_range("minute");
  if (t->second > 59) out_of_range("second");
  r.time_of_day = *t;

  auto d = civil_date_from_text(fields[3]);
  if (!d) grammar("date", "expected DD-MM-YYYY");
  if (d->month < 1 || d->month > 12) out_of_range("month");
  if (d->year < 1970) out_of_range("year");
  if (d->day < 1 || d->day > days_in_month(d->year, d->month)) {
    throw SmsParseError(ParseErrorKind::BadDate, "date", "no such calendar date: " + std::string(fields[3]));
  }
  r.date = *d;
  r.epoch = tz.to_epoch(r.date, r.time_of_day);
  return r;
}

std::string serialize_report(const LocationReport& report) {
  return format_micro_degrees(report.lat_e6) + "," + format_micro_degrees(report.lon_e6) + "," +
         report.time_of_day.str() + "," + report.date.str();
}

LocationReport make_report(std::string imei, std::string phone, std::int64_t lat_e6,
                           std::int64_t lon_e6, std::int64_t epoch, const HomeTimeZone& tz) {
  LocationReport r;
  r.imei = std::move(imei);
  r.phone = std::move(phone);
  r.lat_e6 = lat_e6;
  r.lon_e6 = lon_e6;
  auto [date, time] = tz.from_epoch(epoch);
  r.date = date;
  r.time_of_day = time;
  // Repeated local hours map back to a single instant.
  r.epoch = tz.to_epoch(date, time);
  return r;
}

std::string format_ingest_line(const RawSms& sms) {
  return sms.from_phone + "\t" + sms.imei + "\t" + sms.body;
}

RawSms parse_ingest_line(std::string_view line, std::int64_t received_at) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto cols = split_exact(line, '\t');
  if (cols.size() != 3) grammar("record", "expected from_phone<TAB>imei<TAB>body");
  return RawSms{std::string(cols[0]), std::string(cols[1]), std::string(cols[2]), received_at};
}

std::string format_spool_line(const RawSms& sms) {
  return format_ingest_line(sms) + "\t" + std::to_string(sms.received_at);
}

RawSms parse_spool_line(std::string_view line) {
  auto tab = line.rfind('\t');
  if (tab == std::string_view::npos) grammar("spool", "missing received_at column");
  auto ts = line.substr(tab + 1);
  std::int64_t received_at = 0;
  auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), received_at);
  if (ec != std::errc{} || ptr != ts.data() + ts.size()) grammar("spool", "bad received_at");
  return parse_ingest_line(line.substr(0, tab), received_at);
}

}  // namespace pichain
