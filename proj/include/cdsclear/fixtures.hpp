#pragma once

#include "cdsclear/netcore.hpp"

namespace cdsclear::fixtures {

/// Three-bank example: B owes 2 to A and 1 to C, A writes a CDS on B held by
/// C, alpha = beta = 1/2. Unique solution r = (1, 1/3, 1).
inline FinancialSystem figure1() {
  FinancialSystem sys;
  sys.alpha = Rat(1, 2);
  sys.beta = Rat(1, 2);
  BankIndex a = sys.add_bank("A", Rat(0));
  BankIndex b = sys.add_bank("B", Rat(2));
  BankIndex c = sys.add_bank("C", Rat(1));
  sys.add_contract(b, a, std::nullopt, Rat(2));
  sys.add_contract(b, c, std::nullopt, Rat(1));
  sys.add_contract(a, c, b, Rat(1));
  sys.canonicalize();
  return sys;
}

inline RecoveryVector figure1_solution() {
  RecoveryVector r;
  r.rates = {Rat(1), Rat(1, 3), Rat(1)};
  return r;
}

/// No-default-cost system whose unique solution is irrational:
/// r_A = 1 - 1/sqrt(2), r_B = 2 - sqrt(2), r_C = 1. B holds external assets 1,
/// owes 1/2 to A and 1/2 to t, and writes a CDS on A held by C; A owes 1 to C.
/// The clearing conditions reduce to r_A = r_B/2 and r_B = 1/(2 - r_A). The
/// system has no naked positions (C's CDS on A is covered by A's debt to C).
inline FinancialSystem irrational_example() {
  FinancialSystem sys;
  sys.alpha = 1;
  sys.beta = 1;
  BankIndex a = sys.add_bank("A", Rat(0));
  BankIndex b = sys.add_bank("B", Rat(1));
  BankIndex c = sys.add_bank("C", Rat(0));
  BankIndex t = sys.add_bank("t", Rat(0));
  sys.add_contract(a, c, std::nullopt, Rat(1));
  sys.add_contract(b, a, std::nullopt, Rat(1, 2));
  sys.add_contract(b, t, std::nullopt, Rat(1, 2));
  sys.add_contract(b, c, a, Rat(1));
  sys.canonicalize();
  return sys;
}

}  // namespace cdsclear::fixtures
