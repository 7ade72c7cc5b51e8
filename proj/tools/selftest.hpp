#pragma once

// Invariant self-check suite behind the `selftest` subcommand; returns the
// number of failed checks and prints one PASS/FAIL line per check.
int run_selftest();
