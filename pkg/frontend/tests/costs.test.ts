import { describe, expect, it } from "vitest";
import { MICRO, roundHalfEvenDiv, sessionCostMicro } from "../src/costs.js";

describe("roundHalfEvenDiv", () => {
  it("rounds exact halves to the even neighbour", () => {
    expect(roundHalfEvenDiv(7n, 2n)).toBe(4n); // 3.5 -> 4
    expect(roundHalfEvenDiv(5n, 2n)).toBe(2n); // 2.5 -> 2
    expect(roundHalfEvenDiv(9n, 2n)).toBe(4n); // 4.5 -> 4
    expect(roundHalfEvenDiv(11n, 2n)).toBe(6n); // 5.5 -> 6
  });

  it("rounds ordinary fractions to the nearest integer", () => {
    expect(roundHalfEvenDiv(7n, 3n)).toBe(2n);
    expect(roundHalfEvenDiv(8n, 3n)).toBe(3n);
    expect(roundHalfEvenDiv(600n, 6n)).toBe(100n);
    expect(roundHalfEvenDiv(0n, 5n)).toBe(0n);
  });

  it("rejects zero or negative inputs", () => {
    expect(() => roundHalfEvenDiv(1n, 0n)).toThrow(RangeError);
    expect(() => roundHalfEvenDiv(-1n, 2n)).toThrow(RangeError);
  });
});

describe("sessionCostMicro", () => {
  it("prices a short dialog exactly", () => {
    // tokens_in=7 over 2 turns: no-cache input is 5*7 = 35 micro, cached
    // input is 7*(2+61)/(2*3) = 441/6 = 73.5, half-even -> 74; output adds
    // 25*2 = 50 micro to both lines.
    expect(sessionCostMicro(7, 2, 2)).toEqual({ nocacheMicro: 85, cachedMicro: 124 });
  });

  it("shows caching losing money on very short dialogs", () => {
    // 4 turns: cached input 1000*65/10 = 6500 exceeds the flat 5000.
    expect(sessionCostMicro(1000, 0, 4)).toEqual({ nocacheMicro: 5000, cachedMicro: 6500 });
  });

  it("shows caching winning on long dialogs", () => {
    // 100 turns: cached input 10^6 * 161/202 = 797029.70.. -> 797030,
    // plus 10^6 output micro on both lines.
    expect(sessionCostMicro(1_000_000, 40_000, 100)).toEqual({
      nocacheMicro: 6_000_000,
      cachedMicro: 1_797_030,
    });
  });

  it("prices sessions with no input at output cost alone", () => {
    expect(sessionCostMicro(0, 10, 5)).toEqual({ nocacheMicro: 250, cachedMicro: 250 });
    expect(sessionCostMicro(100, 2, 0)).toEqual({ nocacheMicro: 50, cachedMicro: 50 });
  });

  it("reproduces the reference aggregate regime", () => {
    // One dialog carrying 83,176M input tokens over 55 turns with 561.2M
    // output prices at $429,910 flat and about $100,177 cached.
    const cost = sessionCostMicro(83_176_000_000, 561_200_000, 55);
    expect(cost.nocacheMicro).toBe(429_910 * MICRO);
    expect(cost.cachedMicro).toBe(100_176_571_429);
  });

  it("crosses break-even between five and six turns", () => {
    // cached < nocache exactly when T+61 < 10(T+1), i.e. T > 51/9 = 17/3:
    // integer dialogs of 6+ turns save money, 5 or fewer lose.
    for (let turns = 1; turns <= 50; turns++) {
      const { nocacheMicro, cachedMicro } = sessionCostMicro(9_000_000, 0, turns);
      if (turns <= 5) {
        expect(cachedMicro).toBeGreaterThan(nocacheMicro);
      } else {
        expect(cachedMicro).toBeLessThan(nocacheMicro);
      }
    }
  });
});
