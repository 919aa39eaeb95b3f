#include "doctest.h"
#include "gera/common.hpp"
#include "gera/csv.hpp"

using namespace gera;

TEST_CASE("csv basic parse with header") {
    auto t = csv::parse("a,b,c\n1,2,3\n4,5,6\n");
    CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][2] == "6");
}

TEST_CASE("csv rfc4180 quoting") {
    auto t = csv::parse("name,note\n\"Smith, J\",\"said \"\"hi\"\"\"\nplain,\"multi\nline\"\n");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == "Smith, J");
    CHECK(t.rows[0][1] == "said \"hi\"");
    CHECK(t.rows[1][1] == "multi\nline");
}

TEST_CASE("csv crlf and missing trailing newline") {
    auto t = csv::parse("a,b\r\n1,2\r\n3,4");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][1] == "4");
}

TEST_CASE("csv header-only file yields zero rows") {
    auto t = csv::parse("a,b,c\n");
    CHECK(t.rows.empty());
}

TEST_CASE("csv errors carry line numbers") {
    CHECK_THROWS_WITH_AS(csv::parse("a,b\n1,2,3\n"),
                         doctest::Contains("line 2"), ValidationError);
    CHECK_THROWS_AS(csv::parse("a,b\n\"unterminated\n"), ValidationError);
    CHECK_THROWS_AS(csv::parse(""), ValidationError);
}
