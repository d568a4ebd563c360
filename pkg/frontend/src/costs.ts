// Session pricing, mirrored from the engine so chart values computed here
// agree with /api/metrics/series to the exact micro-dollar.
//
// The engine prices a finished session under a uniform-dialog model: the
// session's total processed input volume C over T turns implies a per-turn
// append of m = 2C / (T (T + 1)), and the closed forms collapse to integer
// arithmetic:
//
//   output          = 25 * tokens_out                     micro-dollars
//   input, no cache = 5 * tokens_in                       micro-dollars
//   input, cached   = tokens_in * (T + 61) / (2 (T + 1))  micro-dollars,
//                     rounded half to even
//
// The cached coefficient comes from the pricing ratios (cache writes cost
// 2x a fresh token, cache hits 1/10th): x^2/20 + 61x/20 per-dialog against
// x^2/2 + x/2 uncached, with the shared factor m * $5/MTOK cancelled.

/** Micro-dollars per dollar. */
export const MICRO = 1_000_000;

/** Exact integer division rounded half to even (num, den must be >= 0). */
export function roundHalfEvenDiv(num: bigint, den: bigint): bigint {
  if (den <= 0n) throw new RangeError("den must be positive");
  if (num < 0n) throw new RangeError("num must be non-negative");
  const q = num / den;
  const twiceRem = 2n * (num % den);
  if (twiceRem > den || (twiceRem === den && q % 2n === 1n)) {
    return q + 1n;
  }
  return q;
}

export interface SessionCost {
  nocacheMicro: number;
  cachedMicro: number;
}

/**
 * Price one finished session in integer micro-dollars, both with and
 * without prompt caching. Sessions that never consumed input (or report a
 * non-positive turn count) are priced at output cost alone on both lines.
 */
export function sessionCostMicro(
  tokensIn: number,
  tokensOut: number,
  turns: number,
): SessionCost {
  const outputMicro = 25n * BigInt(tokensOut);
  if (turns <= 0 || tokensIn <= 0) {
    const both = Number(outputMicro);
    return { nocacheMicro: both, cachedMicro: both };
  }
  const cIn = BigInt(tokensIn);
  const t = BigInt(turns);
  const nocache = 5n * cIn + outputMicro;
  const cachedInput = roundHalfEvenDiv(cIn * (t + 61n), 2n * (t + 1n));
  return {
    nocacheMicro: Number(nocache),
    cachedMicro: Number(cachedInput + outputMicro),
  };
}
