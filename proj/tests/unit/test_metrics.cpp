#include <gtest/gtest.h>

#include <random>

#include "botscope/metrics.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace botscope;

namespace {

std::string random_string(std::mt19937& rng, std::size_t max_len, const std::string& alphabet) {
  std::string s(rng() % (max_len + 1), ' ');
  for (auto& c : s) c = alphabet[rng() % alphabet.size()];
  return s;
}

CookieObservation cookie(std::vector<std::optional<std::string>> values, bool session = false) {
  CookieObservation c;
  c.site = "a.com";
  c.cookie_domain = ".a.com";
  c.name = "id";
  c.is_session = session;
  c.values_per_visit = std::move(values);
  return c;
}

RequestRecord request(std::string site, std::string url, std::string type, Party party = Party::unknown) {
  return {std::move(site), std::move(url), std::move(type), party};
}

Blocklist list(std::string_view text, ListName name = ListName::easylist) {
  return Blocklist(parse_blocklist(text, name).rules);
}

}  // namespace

// -- Ratcliff-Obershelp -------------------------------------------------------

TEST(RatcliffObershelp, Examples) {
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("abc", "abc"), 1.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("abc", "xyz"), 0.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("", ""), 1.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("", "a"), 0.0);
  // WIKI + M + IA
  EXPECT_EQ(matched_characters("WIKI MEDIA", "WIKIMANIA"), 7u);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("WIKI MEDIA", "WIKIMANIA"), 14.0 / 19.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("WIKI MEDIA", "WIKIMANIA"), oracle::ratcliff_obershelp("WIKI MEDIA", "WIKIMANIA"));
}

TEST(RatcliffObershelp, LeftmostTieBreak) {
  // "ab" and "cd" both length 2; the one leftmost in a is taken first
  const auto blocks = matching_blocks("abxcd", "cdab");
  ASSERT_FALSE(blocks.empty());
  EXPECT_EQ(matched_characters("abxcd", "cdab"), 2u);
  EXPECT_EQ(blocks[0].a_pos, 0u);
  EXPECT_EQ(blocks[0].b_pos, 2u);
}

TEST(RatcliffObershelpProperty, AgreesWithOracle) {
  std::mt19937 rng(1234);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_string(rng, 12, "abc");
    const auto b = random_string(rng, 12, "abcd");
    EXPECT_EQ(matched_characters(a, b), oracle::matched(a, b)) << a << " / " << b;
    const double r = ratcliff_obershelp(a, b);
    EXPECT_EQ(r, oracle::ratcliff_obershelp(a, b));
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    if (!a.empty()) EXPECT_EQ(ratcliff_obershelp(a, a), 1.0);
  }
}

// -- Wilcoxon -------------------------------------------------------------------

TEST(Wilcoxon, AllPositiveFive) {
  const auto r = wilcoxon_signed_rank({{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}});
  EXPECT_EQ(r.n_effective, 5u);
  EXPECT_EQ(r.w_statistic, 0.0);
  EXPECT_EQ(r.method, WilcoxonMethod::exact);
  EXPECT_EQ(r.p_exact, (Fraction{1, 16}));
  EXPECT_DOUBLE_EQ(r.p_two_sided, 0.0625);
  EXPECT_EQ(to_json(r).at("p_exact"), "1/16");
}

TEST(Wilcoxon, AllEqualIsDegenerate) {
  const auto r = wilcoxon_signed_rank({{3, 3}, {7, 7}});
  EXPECT_EQ(r.n_effective, 0u);
  EXPECT_EQ(r.p_two_sided, 1.0);
  EXPECT_EQ(r.method, WilcoxonMethod::exact);
  EXPECT_THROW(wilcoxon_signed_rank({}), std::invalid_argument);
}

TEST(Wilcoxon, MixedSixMatchesEnumeration) {
  const std::vector<std::pair<double, double>> pairs = {{10, 7}, {4, 6}, {8, 8}, {5, 1}, {9, 12}, {3, 0}, {6, 2}};
  const auto r = wilcoxon_signed_rank(pairs);
  const auto o = oracle::wilcoxon_enumerate(pairs);
  EXPECT_EQ(r.n_effective, 6u);
  EXPECT_EQ(r.w_statistic * 2, static_cast<double>(o.w2));
  EXPECT_EQ(r.p_exact, (Fraction{o.p.num, o.p.den}));
}

TEST(WilcoxonProperty, ExactAgreesWithEnumerationAndIsSwapSymmetric) {
  std::mt19937 rng(77);
  for (int round = 0; round < 500; ++round) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<std::pair<double, double>> pairs, swapped;
    for (std::size_t i = 0; i < n; ++i) {
      // small integer range forces ties and zeros
      const double x = static_cast<double>(rng() % 6), y = static_cast<double>(rng() % 6);
      pairs.emplace_back(x, y);
      swapped.emplace_back(y, x);
    }
    const auto r = wilcoxon_signed_rank(pairs);
    const auto o = oracle::wilcoxon_enumerate(pairs);
    ASSERT_EQ(r.n_effective, o.n);
    EXPECT_EQ(r.p_exact, (Fraction{o.p.num, o.p.den}));
    EXPECT_EQ(static_cast<std::uint64_t>(r.w_statistic * 2), o.w2);
    const auto s = wilcoxon_signed_rank(swapped);
    EXPECT_EQ(s.p_exact, r.p_exact);
    EXPECT_EQ(s.w_statistic, r.w_statistic);
    EXPECT_GE(r.p_two_sided, 0.0);
    EXPECT_LE(r.p_two_sided, 1.0);
    EXPECT_LE(r.w_statistic, static_cast<double>(n * (n + 1)) / 2.0);
  }
}

TEST(Wilcoxon, NormalApproximationAboveLimit) {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 1; i <= 30; ++i) pairs.emplace_back(i, 0);
  const auto r = wilcoxon_signed_rank(pairs);
  EXPECT_EQ(r.method, WilcoxonMethod::normal_approx);
  EXPECT_FALSE(r.p_exact);
  // z = (0 - 232.5 + 0.5) / sqrt(30*31*61/24)
  const double z = (0.0 - 232.5 + 0.5) / std::sqrt(30.0 * 31 * 61 / 24);
  EXPECT_NEAR(r.p_two_sided, std::erfc(-z / std::sqrt(2.0)), 1e-12);
  EXPECT_LT(r.p_two_sided, 1e-5);

  // balanced signs: no evidence
  std::vector<std::pair<double, double>> balanced;
  for (int i = 1; i <= 40; ++i) balanced.emplace_back(i % 2 ? i : 0, i % 2 ? 0 : i);
  EXPECT_GT(wilcoxon_signed_rank(balanced).p_two_sided, 0.5);
}

TEST(Wilcoxon, ExactAtLimit) {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 1; i <= 25; ++i) pairs.emplace_back(0, i);
  const auto r = wilcoxon_signed_rank(pairs);
  EXPECT_EQ(r.method, WilcoxonMethod::exact);
  EXPECT_EQ(r.p_exact, (Fraction{1, std::uint64_t{1} << 24}));
}

// -- Cookies ----------------------------------------------------------------------

TEST(Cookies, FourCriteria) {
  EXPECT_TRUE(classify_tracking_cookie(cookie({"aaaaaaaa", "bbbbbbbb"})));
  EXPECT_FALSE(classify_tracking_cookie(cookie({"aaaaaaaa", "bbbbbbbb"}, /*session=*/true)));
  EXPECT_FALSE(classify_tracking_cookie(cookie({"aaaaaaa", "bbbbbbb"})));
  EXPECT_FALSE(classify_tracking_cookie(cookie({"aaaaaaaa", std::nullopt, "bbbbbbbb"})));
  EXPECT_FALSE(classify_tracking_cookie(cookie({"aaaaaaaa", "aaaaaaaa"})));
  // similarity exactly at the threshold does not count as differing
  EXPECT_FALSE(classify_tracking_cookie(cookie({"aaaabbbb", "aaaacccc"}), 0.5));
  EXPECT_TRUE(classify_tracking_cookie(cookie({"aaaabbbb", "aaaacccc"}), 0.51));
}

TEST(Cookies, QuotesAreStrippedForLength) {
  EXPECT_FALSE(classify_tracking_cookie(cookie({"\"aaaaaaa\"", "\"bbbbbbb\""})));
  EXPECT_TRUE(classify_tracking_cookie(cookie({"\"aaaaaaaa\"", "\"bbbbbbbb\""})));
  const auto a = assess_cookie(cookie({"aaaaaaaa", "bbbbbbbb"}));
  EXPECT_EQ(a.min_similarity, 0.0);
  EXPECT_TRUE(a.persistent && a.long_enough && a.always_set && a.values_differ);
}

TEST(Cookies, SingleVisitCannotDiffer) {
  const auto a = assess_cookie(cookie({"aaaaaaaa"}));
  EXPECT_FALSE(a.min_similarity);
  EXPECT_FALSE(a.tracking());
}

// -- Blocklists -------------------------------------------------------------------

TEST(Blocklist, Examples) {
  EXPECT_TRUE(list("||moatads.com^").match("https://z.moatads.com/x.js"));
  EXPECT_TRUE(list("/advert.").match("https://x.com/advert.js"));
  EXPECT_FALSE(list("||example.com^").match("https://notexample.com/"));
  EXPECT_TRUE(list("||example.com^").match("https://example.com"));
  EXPECT_TRUE(list("|https://ads.").match("https://ads.x.com/"));
  EXPECT_FALSE(list("|https://ads.").match("http://x.com/https://ads."));
  EXPECT_TRUE(list("swf|").match("http://x.com/a.swf"));
  EXPECT_FALSE(list("swf|").match("http://x.com/a.swf?x"));
  EXPECT_TRUE(list("/banner/*/img^").match("http://x.com/banner/foo/img?x"));
  EXPECT_TRUE(list("||ads.example.com^$third-party").match("https://ads.example.com/x"));
}

TEST(Blocklist, CountsSkippedConstructs) {
  const auto p = parse_blocklist("[Adblock Plus 2.0]\n! comment\nexample.com##.ad\n@@||good.com^\n/ads[0-9]+/\n"
                                 "||t.com^$script\n||x|y\n\n",
                                 ListName::easyprivacy);
  EXPECT_EQ(p.stats.rules, 1u);
  EXPECT_EQ(p.stats.comments, 2u);
  EXPECT_EQ(p.stats.element_hiding, 1u);
  EXPECT_EQ(p.stats.exceptions, 1u);
  EXPECT_EQ(p.stats.regex_rules, 1u);
  EXPECT_EQ(p.stats.options_ignored, 1u);
  EXPECT_EQ(p.stats.unsupported, 1u);
  ASSERT_EQ(p.rules.size(), 1u);
  EXPECT_EQ(p.rules[0].list_name, ListName::easyprivacy);
  EXPECT_EQ(p.rules[0].anchor, Anchor::domain_anchor);
}

TEST(BlocklistProperty, AgreesWithRegexOracle) {
  std::mt19937 rng(99);
  const std::vector<std::string> hosts = {"ads.x.com", "x.com", "notx.com", "a.b.x.com", "cdn.y.org"};
  const std::vector<std::string> paths = {"/", "/ad/banner.js", "/x?ad=1", "/img/ad.gif", "/a-b_c.d%20/", ""};
  const std::vector<std::string> filters = {"||x.com^", "||x.com", "|https://ads.", "ad", "/ad/*.js", "ad^",
                                            "banner.js|",  "^ad=", "||y.org/*gif", "b_c.d%", "*/img/", "||ads.x.com^*"};
  for (int i = 0; i < 2000; ++i) {
    const std::string url = std::string(rng() % 2 ? "https" : "http") + "://" + hosts[rng() % hosts.size()] +
                            paths[rng() % paths.size()];
    const auto& filter = filters[rng() % filters.size()];
    EXPECT_EQ(list(filter).match(url).has_value(), oracle::abp_matches(filter, url)) << filter << " on " << url;
  }
}

TEST(BlocklistProperty, PriorityAndOrderIndependence) {
  std::vector<std::string> rules = {"ad", "||x.com^", "|https://ads.", "/banner", "||y.org^"};
  const std::vector<std::string> urls = {"https://ads.x.com/banner", "https://y.org/ad", "http://z.net/banner",
                                         "http://q.net/nothing"};
  std::vector<bool> reference;
  for (const auto& u : urls) {
    std::string text;
    for (const auto& r : rules) text += r + "\n";
    reference.push_back(list(text).match(u).has_value());
  }
  std::mt19937 rng(4);
  for (int round = 0; round < 50; ++round) {
    std::shuffle(rules.begin(), rules.end(), rng);
    std::string text;
    for (const auto& r : rules) text += r + "\n";
    const auto bl = list(text);
    for (std::size_t i = 0; i < urls.size(); ++i) EXPECT_EQ(bl.match(urls[i]).has_value(), reference[i]);
    // domain anchors win over everything else
    EXPECT_EQ(bl.match("https://ads.x.com/banner")->rule->raw, "||x.com^");
  }
}

// -- Run comparison -----------------------------------------------------------------

TEST(CompareRuns, PercentDiffMatchesReferenceCounts) {
  const auto rows = test::count_rows(test::fixture("runs") / "resource_counts.tsv");
  ASSERT_EQ(rows.size(), 15u);
  for (const auto& r : rows) {
    const auto d = percent_diff(static_cast<double>(r.a), static_cast<double>(r.b));
    ASSERT_TRUE(d);
    EXPECT_NEAR(*d, r.expected, 0.01) << r.name;
  }
  EXPECT_FALSE(percent_diff(0, 5));
}

TEST(CompareRuns, IdenticalRuns) {
  std::vector<RequestRecord> run;
  for (int s = 0; s < 5; ++s)
    for (int k = 0; k <= s; ++k) {
      const auto site = "s" + std::to_string(s) + ".com";
      run.push_back(request(site, "https://" + site + "/" + std::to_string(k), k % 2 ? "script" : "image",
                            k % 3 ? Party::first : Party::third));
    }
  const auto c = compare_runs(run, run);
  for (const auto& r : c.rows) EXPECT_EQ(r.diff_pct, 0.0);
  EXPECT_EQ(c.total.diff_pct, 0.0);
  ASSERT_TRUE(c.first_party && c.third_party);
  EXPECT_EQ(c.first_party->test.p_two_sided, 1.0);
  EXPECT_EQ(c.third_party->test.p_two_sided, 1.0);
  EXPECT_FALSE(c.share);
}

TEST(CompareRuns, ResourceTypesAndPartiesAndShares) {
  std::vector<RequestRecord> a, b;
  for (int i = 0; i < 10; ++i) a.push_back(request("s.com", "https://s.com/" + std::to_string(i), "image", Party::first));
  for (int i = 0; i < 15; ++i) b.push_back(request("s.com", "https://s.com/" + std::to_string(i), "image", Party::first));
  a.push_back(request("t.com", "https://ads.net/x", "script", Party::third));
  b.push_back(request("u.com", "https://track.org/p", "beacon", Party::third));
  const auto el = list("||ads.net^");
  const auto ep = list("||track.org^", ListName::easyprivacy);
  const auto c = compare_runs(a, b, &el, &ep);
  ASSERT_EQ(c.rows.size(), 3u);
  EXPECT_EQ(c.rows[0].resource_type, "script");  // -100%
  EXPECT_EQ(c.rows[1].resource_type, "image");   // +50%
  EXPECT_EQ(c.rows[2].resource_type, "beacon");  // undefined
  EXPECT_DOUBLE_EQ(*c.rows[1].diff_pct, 50.0);
  EXPECT_FALSE(c.rows[2].diff_pct);
  EXPECT_EQ(c.total.count_a, 11u);
  EXPECT_EQ(c.total.count_b, 16u);
  ASSERT_TRUE(c.first_party);
  EXPECT_EQ(c.first_party->sites, 3u);
  EXPECT_EQ(c.first_party->more_in_b, 1u);
  EXPECT_EQ(c.third_party->more_in_a, 1u);
  EXPECT_EQ(c.third_party->more_in_b, 1u);
  ASSERT_TRUE(c.share);
  EXPECT_DOUBLE_EQ(c.share->ads_a, 1.0 / 11);
  EXPECT_DOUBLE_EQ(c.share->ads_b, 0.0);
  EXPECT_DOUBLE_EQ(c.share->trackers_b, 1.0 / 16);
  const auto j = to_json(c);
  EXPECT_TRUE(j.at("resource_types")[2].at("diff_pct").is_null());
  EXPECT_EQ(j.at("total").at("count_b"), 16);
}

TEST(CompareRuns, NoPartyInformation) {
  const std::vector<RequestRecord> a = {request("s.com", "https://s.com/", "main_frame")};
  const auto c = compare_runs(a, a);
  EXPECT_FALSE(c.first_party);
  EXPECT_TRUE(to_json(c).at("first_party").is_null());
}
