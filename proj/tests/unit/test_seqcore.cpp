#include <algorithm>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "jsi/errors.hpp"
#include "jsi/seqcore.hpp"

using namespace jsi;
using fixtures::seq;

namespace {

std::vector<LabeledExample> numbered(const Vocabulary& v, int n) {
  // Distinct sequences: base-12 digits of i.
  std::vector<LabeledExample> out;
  const auto content = v.content_tokens();
  for (int i = 0; i < n; ++i) {
    std::vector<Token> idx;
    int r = i;
    do {
      idx.push_back(content[static_cast<std::size_t>(r % static_cast<int>(content.size()))]);
      r /= static_cast<int>(content.size());
    } while (r > 0);
    idx.push_back(v.eos());
    out.push_back({Sequence(idx, v, 24), {static_cast<double>(i)}});
  }
  return out;
}

}  // namespace

TEST_CASE("vocabulary invariants") {
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>"}, 0, 1), ConfigError);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "a", "a"}, 0, 1), ConfigError);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "a"}, 1, 1), ConfigError);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "a"}, 0, 3), ConfigError);
  const auto v = Vocabulary::letters(3);
  CHECK(v.size() == 5);
  CHECK(v.content_tokens() == std::vector<Token>{2, 3, 4});
  CHECK(*v.find("c") == 4);
  CHECK_FALSE(v.find("z").has_value());
}

TEST_CASE("sequence constructor accepts exactly the EOS-terminal lists") {
  const auto v = Vocabulary::letters(3);
  const int tmax = 5;
  Rng rng(7);
  int accepted = 0, rejected = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t len = rng.uniform_index(8);
    std::vector<Token> idx(len);
    for (auto& t : idx) t = static_cast<Token>(rng.uniform_index(7)) - 1;  // -1 .. 5
    bool valid = !idx.empty() && static_cast<int>(idx.size()) <= tmax && idx.back() == v.eos();
    for (std::size_t i = 0; valid && i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= v.size() || idx[i] == v.bos()) valid = false;
      if (idx[i] == v.eos() && i + 1 != idx.size()) valid = false;
    }
    if (valid) {
      CHECK_NOTHROW(Sequence(idx, v, tmax));
      ++accepted;
    } else {
      CHECK_THROWS_AS(Sequence(idx, v, tmax), MalformedSequence);
      ++rejected;
    }
  }
  CHECK(accepted > 50);
  CHECK(rejected > 50);
}

TEST_CASE("parse_sequence and to_string") {
  const auto v = Vocabulary::letters(3);
  const auto x = seq("a b a", v);
  CHECK(x.size() == 4);
  CHECK(x.to_string(v) == "a b a");
  CHECK(seq("a b a <eos>", v) == x);
  CHECK(seq("", v).size() == 1);
  CHECK_THROWS_AS(seq("a q", v), MalformedSequence);
  CHECK_THROWS_AS(parse_sequence("a a a a a", v, 5), MalformedSequence);
}

TEST_CASE("split_dataset sizes and partition") {
  const auto v = Vocabulary::letters(12);
  Rng rng(1);
  const auto data = numbered(v, 3000);
  const auto s = split_dataset(data, 0.5, rng);
  CHECK(s.train.size() == 1500);
  CHECK(s.eval.size() == 1500);

  std::vector<Sequence> all;
  for (const auto& e : s.train) all.push_back(e.sequence);
  for (const auto& e : s.eval) all.push_back(e.sequence);
  std::vector<Sequence> orig;
  for (const auto& e : data) orig.push_back(e.sequence);
  std::sort(all.begin(), all.end());
  std::sort(orig.begin(), orig.end());
  CHECK(all == orig);
}

TEST_CASE("split_dataset degenerate and determinism") {
  const auto v = Vocabulary::letters(12);
  const auto one = numbered(v, 1);
  Rng rng(3);
  const auto s = split_dataset(one, 0.5, rng);
  CHECK(s.train.size() == 1);
  CHECK(s.eval.empty());

  const auto data = numbered(v, 101);
  Rng a(42), b(42);
  const auto sa = split_dataset(data, 0.3, a);
  const auto sb = split_dataset(data, 0.3, b);
  CHECK(format_dataset(sa.train, v) == format_dataset(sb.train, v));
  CHECK(format_dataset(sa.eval, v) == format_dataset(sb.eval, v));
  CHECK(sa.train.size() == 30);  // 30.3 rounds to 30

  Rng c(1);
  CHECK(split_dataset(numbered(v, 5), 0.5, c).train.size() == 3);  // 2.5 rounds up
  CHECK_THROWS_AS(split_dataset(data, 0.0, c), ConfigError);
  CHECK_THROWS_AS(split_dataset(data, 1.0, c), ConfigError);
  CHECK_THROWS_AS(split_dataset({}, 0.5, c), ConfigError);
}

TEST_CASE("kmer_set") {
  const auto v = Vocabulary::letters(3);
  const Token a = 2, b = 3;
  CHECK(kmer_set(seq("a b a", v), 2) == std::set<Kmer>{{a, b}, {b, a}});
  CHECK(kmer_set(seq("a a a", v), 1) == std::set<Kmer>{{a}});
  CHECK(kmer_set(seq("a b c b", v), 4).size() == 1);
  CHECK(kmer_set(seq("a b", v), 3).empty());
  CHECK_THROWS(kmer_set(seq("a b", v), 0));
}

TEST_CASE("dataset text round trip and line-numbered errors") {
  const auto v = Vocabulary::letters(4);
  const std::string text = "a b\t1.5,-2\n\nc\t0,0.25\n<eos>\t3,4\n";
  const auto data = parse_dataset(text, v, 8);
  REQUIRE(data.size() == 3);
  CHECK(data[0].scores == std::vector<double>{1.5, -2.0});
  CHECK(data[2].sequence.size() == 1);
  const auto again = parse_dataset(format_dataset(data, v), v, 8);
  CHECK(format_dataset(again, v) == format_dataset(data, v));

  auto message_of = [&](const std::string& bad) {
    try {
      parse_dataset(bad, v, 8, "d.tsv");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of("a\t1\nb\tx\n").find("d.tsv:2") != std::string::npos);
  CHECK(message_of("a\t1\nb\t1,2\n").find("d.tsv:2") != std::string::npos);
  CHECK(message_of("a b\n").find("d.tsv:1") != std::string::npos);
  CHECK(message_of("q\t1\n").find("d.tsv:1") != std::string::npos);
  CHECK(message_of("a\tnan\n").find("d.tsv:1") != std::string::npos);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = c.uniform_open();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(c.uniform_index(7) < 7);
  }
}
