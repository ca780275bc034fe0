// Network parameters tab: per-channel architecture and training error.

import type { ModelSummaryJson } from "../types.js";

export function renderModelView(doc: Document, summary: ModelSummaryJson | null, error: string | null): HTMLElement {
  const view = doc.createElement("div");
  view.className = "model-view";
  view.setAttribute("data-view", "model");
  if (error) {
    const msg = doc.createElement("p");
    msg.className = "model-missing";
    msg.textContent = error;
    view.append(msg);
    return view;
  }
  if (!summary) {
    const msg = doc.createElement("p");
    msg.textContent = "Loading…";
    view.append(msg);
    return view;
  }
  const table = doc.createElement("table");
  table.className = "model-table";
  const head = doc.createElement("tr");
  for (const title of ["channel", "architecture", "parameters", "train MSE", "val MSE"]) {
    const th = doc.createElement("th");
    th.textContent = title;
    head.append(th);
  }
  table.append(head);
  for (const channel of summary.channels) {
    const row = doc.createElement("tr");
    row.setAttribute("data-model-row", channel.channel);
    const cells = [
      channel.channel,
      channel.arch.join("→"),
      String(channel.params),
      channel.train_mse === null ? "—" : channel.train_mse.toExponential(2),
      channel.val_mse === null ? "—" : channel.val_mse.toExponential(2),
    ];
    for (const text of cells) {
      const td = doc.createElement("td");
      td.textContent = text;
      row.append(td);
    }
    table.append(row);
  }
  view.append(table);
  return view;
}
