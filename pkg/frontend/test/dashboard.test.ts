import { describe, expect, it } from "vitest";

import { renderDashboard } from "../src/render/dashboard.js";
import { allFaultSnapshot, healthySnapshot, overriddenSnapshot, singleFaultSnapshot } from "./fixtures.js";

describe("dashboard rendering", () => {
  it.each([
    ["healthy", healthySnapshot()],
    ["single-fault", singleFaultSnapshot()],
    ["all-fault", allFaultSnapshot()],
  ])("renders the %s snapshot without errors", (_name, snapshot) => {
    const view = renderDashboard(document, snapshot);
    expect(view.querySelectorAll("[data-tile]").length).toBe(8);
    expect(view.querySelectorAll("[data-actuator-row]").length).toBe(6);
  });

  it("renders a waiting message with no snapshot", () => {
    const view = renderDashboard(document, null);
    expect(view.textContent).toContain("Waiting");
  });

  it("shows the alarm strip and highlights the faulted tile", () => {
    const view = renderDashboard(document, singleFaultSnapshot());
    const strip = view.querySelector("[data-alarm-strip]");
    expect(strip?.textContent).toContain("ph-fault");
    const tile = view.querySelector('[data-tile="ph"]');
    expect(tile?.className).toContain("tile-fault");
    expect(tile?.textContent).toContain("—"); // no trusted value
  });

  it("hides the alarm strip when there are no alarms", () => {
    const view = renderDashboard(document, healthySnapshot());
    expect(view.querySelector("[data-alarm-strip]")).toBeNull();
  });

  it("shows AUTO badges normally and OVERRIDE with countdown when pinned", () => {
    const auto = renderDashboard(document, healthySnapshot());
    expect(auto.querySelector('[data-badge="fan"]')?.textContent).toBe("AUTO");

    const pinned = renderDashboard(document, overriddenSnapshot());
    const badge = pinned.querySelector('[data-badge="fan"]');
    expect(badge?.className).toContain("badge-override");
    expect(badge?.textContent).toContain("45");
  });

  it("renders the all-fault safe state (fan on, heaters off)", () => {
    const view = renderDashboard(document, allFaultSnapshot());
    const fan = view.querySelector('[data-actuator-row="fan"]');
    expect(fan?.textContent).toContain("ON");
    const heater = view.querySelector('[data-actuator-row="air_heater"]');
    expect(heater?.textContent).toContain("0%");
  });

  it("disables the controls of an in-flight override only", () => {
    const view = renderDashboard(document, healthySnapshot(), {}, {
      submit: () => undefined,
      inFlight: (actuator) => actuator === "fan",
      error: () => null,
    });
    const fanButton = view.querySelector('[data-override-submit="fan"]') as HTMLButtonElement;
    const ledButton = view.querySelector('[data-override-submit="led"]') as HTMLButtonElement;
    expect(fanButton.disabled).toBe(true);
    expect(ledButton.disabled).toBe(false);
  });

  it("passes the entered level and ttl to the submit handler", () => {
    const calls: [string, number, number][] = [];
    const view = renderDashboard(document, healthySnapshot(), {}, {
      submit: (a, l, t) => calls.push([a, l, t]),
      inFlight: () => false,
      error: () => null,
    });
    const level = view.querySelector('[data-override-level="led"]') as HTMLInputElement;
    const ttl = view.querySelector('[data-override-ttl="led"]') as HTMLInputElement;
    level.value = "0.5";
    ttl.value = "120";
    (view.querySelector('[data-override-submit="led"]') as HTMLButtonElement).click();
    expect(calls).toEqual([["led", 0.5, 120]]);
  });

  it("draws spark-lines when history is available", () => {
    const histories = { co2: [[0, 600], [60, 610], [120, 605]] as [number, number][] };
    const view = renderDashboard(document, healthySnapshot(), histories);
    expect(view.querySelector('[data-tile="co2"] svg')).not.toBeNull();
    expect(view.querySelector('[data-tile="ph"] svg')).toBeNull();
  });
});
