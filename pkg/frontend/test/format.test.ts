import { describe, expect, it } from "vitest";

import { chooseBucket, formatDuty, formatValue, MAX_GRAPH_POINTS } from "../src/format.js";
import { sparklinePath } from "../src/sparkline.js";

describe("bucket choice", () => {
  it("keeps a 24 h window at exactly the point budget", () => {
    expect(chooseBucket(86400)).toBe(144); // 86400 / 144 = 600
    expect(86400 / chooseBucket(86400)).toBeLessThanOrEqual(MAX_GRAPH_POINTS);
  });

  it("never exceeds the budget for any span", () => {
    for (const span of [1, 59, 600, 3600, 7200, 86400, 7 * 86400]) {
      expect(Math.ceil(span / chooseBucket(span))).toBeLessThanOrEqual(MAX_GRAPH_POINTS);
    }
  });

  it("uses 1 s buckets for short spans", () => {
    expect(chooseBucket(300)).toBe(1);
  });
});

describe("value formatting", () => {
  it("renders a dash for untrusted values", () => {
    expect(formatValue(null, "pH")).toBe("—");
    expect(formatValue(Number.NaN, "pH")).toBe("—");
  });

  it("scales decimals with magnitude", () => {
    expect(formatValue(6.523, "pH")).toBe("6.52 pH");
    expect(formatValue(612.34, "ppm")).toBe("612.3 ppm");
    expect(formatValue(3500.4, "lux")).toBe("3500 lux");
  });

  it("formats relays as ON/OFF and duties as percent", () => {
    expect(formatDuty(1, true)).toBe("ON");
    expect(formatDuty(0, true)).toBe("OFF");
    expect(formatDuty(0.175, false)).toBe("18%");
  });
});

describe("sparkline", () => {
  it("builds a path visiting every point", () => {
    const path = sparklinePath([[0, 1], [50, 2], [100, 3]]);
    expect(path.startsWith("M")).toBe(true);
    expect(path.split("L").length).toBe(3);
  });

  it("is empty for no points and safe for constant series", () => {
    expect(sparklinePath([])).toBe("");
    expect(sparklinePath([[0, 5], [10, 5]])).toContain("L");
  });
});
