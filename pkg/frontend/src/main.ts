// Console shell: token gate, tab switching, and the three views (rule
// composer, live alerts feed, telemetry charts). One in-flight refresh per
// view; stale responses are discarded via a generation counter.

import { ApiError, HubApi, Rule } from "./api.js";
import { AlertEntry, newestFirst, parseAlertLines } from "./alerts.js";
import { barsFor, lastTwelveMonths } from "./charts.js";
import {
  ComposerState,
  Device,
  actChoices,
  canSubmit,
  deviceAChoices,
  deviceBChoices,
  evtChoices,
  initialComposer,
  rulePayload,
  selectAct,
  selectDeviceA,
  selectDeviceB,
  selectEvt,
  selectPreset,
  setField,
} from "./composer.js";

const ALERT_STREAM = "alerts";
const ALERT_POLL_MS = 2000;
const CHART_POLL_MS = 5000;
const TOKEN_KEY = "generichub-token";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

let api: HubApi;
let devices: Device[] = [];
let composer: ComposerState = initialComposer();
let alertGeneration = 0;
let chartGeneration = 0;
const imageUrls = new Map<string, string>();

// --- token gate ---------------------------------------------------------------

function boot() {
  const saved = localStorage.getItem(TOKEN_KEY);
  if (saved) {
    start(saved);
    return;
  }
  $("token-gate").hidden = false;
  $("token-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const token = ($("token-input") as HTMLInputElement).value.trim();
    if (token) {
      localStorage.setItem(TOKEN_KEY, token);
      start(token);
    }
  });
}

function start(token: string) {
  api = new HubApi(token);
  $("token-gate").hidden = true;
  $("app").hidden = false;
  for (const button of document.querySelectorAll<HTMLButtonElement>("nav button[data-view]")) {
    button.addEventListener("click", () => showView(button.dataset.view!));
  }
  $("logout").addEventListener("click", () => {
    localStorage.removeItem(TOKEN_KEY);
    location.reload();
  });
  wireComposer();
  refreshDevices().then(() => {
    renderComposer();
    refreshRules();
  });
  setInterval(pollAlerts, ALERT_POLL_MS);
  setInterval(pollCharts, CHART_POLL_MS);
  pollAlerts();
  pollCharts();
}

function showView(name: string) {
  for (const section of document.querySelectorAll<HTMLElement>("main section[data-view]")) {
    section.hidden = section.dataset.view !== name;
  }
  for (const button of document.querySelectorAll<HTMLButtonElement>("nav button[data-view]")) {
    button.classList.toggle("active", button.dataset.view === name);
  }
}

function setBanner(text: string | null) {
  const banner = $("banner");
  banner.hidden = text === null;
  banner.textContent = text ?? "";
}

// --- composer -------------------------------------------------------------------

async function refreshDevices() {
  try {
    devices = await api.devices();
    setBanner(null);
  } catch (err) {
    setBanner(`hub unreachable: ${String(err)}`);
  }
}

function fillSelect(select: HTMLSelectElement, options: { value: string; label: string }[],
                    selected: string | null, placeholder: string) {
  select.innerHTML = "";
  const head = document.createElement("option");
  head.value = "";
  head.textContent = placeholder;
  select.appendChild(head);
  for (const option of options) {
    const el = document.createElement("option");
    el.value = option.value;
    el.textContent = option.label;
    if (option.value === selected) el.selected = true;
    select.appendChild(el);
  }
}

function wireComposer() {
  ($("preset") as HTMLSelectElement).addEventListener("change", (ev) => {
    composer = selectPreset(composer, (ev.target as HTMLSelectElement).value as ComposerState["preset"]);
    renderComposer();
  });
  ($("deviceA") as HTMLSelectElement).addEventListener("change", (ev) => {
    composer = selectDeviceA(composer, (ev.target as HTMLSelectElement).value || null);
    renderComposer();
  });
  ($("evt") as HTMLSelectElement).addEventListener("change", (ev) => {
    composer = selectEvt(composer, (ev.target as HTMLSelectElement).value || null);
    renderComposer();
  });
  ($("deviceB") as HTMLSelectElement).addEventListener("change", (ev) => {
    composer = selectDeviceB(composer, (ev.target as HTMLSelectElement).value || null);
    renderComposer();
  });
  ($("act") as HTMLSelectElement).addEventListener("change", (ev) => {
    composer = selectAct(composer, (ev.target as HTMLSelectElement).value || null);
    renderComposer();
  });
  for (const field of ["to", "container", "stream"] as const) {
    ($(field) as HTMLInputElement).addEventListener("input", (ev) => {
      composer = setField(composer, field, (ev.target as HTMLInputElement).value);
      renderComposer();
    });
  }
  $("composer-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const error = $("composer-error");
    error.textContent = "";
    try {
      await api.createRule(rulePayload(devices, composer));
      composer = initialComposer();
      renderComposer();
      await refreshRules(); // the new rule appears without a reload
    } catch (err) {
      error.textContent = err instanceof ApiError ? err.code : String(err);
    }
  });
}

function renderComposer() {
  const label = (d: Device) => ({ value: d.id, label: d.name ? `${d.id} (${d.name})` : d.id });
  ($("preset") as HTMLSelectElement).value = composer.preset;
  fillSelect($("deviceA") as HTMLSelectElement, deviceAChoices(devices).map(label),
             composer.deviceA, "device A (trigger)");
  fillSelect($("evt") as HTMLSelectElement,
             evtChoices(devices, composer).map((e) => ({ value: e, label: e })),
             composer.evt, "event");
  const pipeline = composer.preset === "alerts-pipeline";
  fillSelect($("deviceB") as HTMLSelectElement, deviceBChoices(devices, composer).map(label),
             composer.deviceB, pipeline ? "camera" : "device B (target)");
  const act = $("act") as HTMLSelectElement;
  act.parentElement!.hidden = pipeline;
  fillSelect(act, actChoices(devices, composer).map((a) => ({ value: a, label: a })),
             composer.act, "action");
  $("pipeline-fields").hidden = !pipeline;
  ($("to") as HTMLInputElement).value = composer.to;
  ($("container") as HTMLInputElement).value = composer.container;
  ($("stream") as HTMLInputElement).value = composer.stream;
  ($("submit-rule") as HTMLButtonElement).disabled = !canSubmit(devices, composer);
}

async function refreshRules() {
  let rules: Rule[];
  try {
    rules = await api.rules();
  } catch (err) {
    setBanner(`hub unreachable: ${String(err)}`);
    return;
  }
  const tbody = $("rules-body");
  tbody.innerHTML = "";
  for (const rule of rules) {
    const row = document.createElement("tr");
    const remove = document.createElement("button");
    remove.textContent = "delete";
    remove.addEventListener("click", async () => {
      await api.deleteRule(rule.ruleId).catch(() => undefined);
      refreshRules();
    });
    for (const text of [
      rule.ruleId,
      `${rule.trigger.deviceId}.${rule.trigger.eventName}`,
      String(rule.actions.length),
      rule.enabled ? "on" : "off",
      String(rule.fireCount),
    ]) {
      const cell = document.createElement("td");
      cell.textContent = text;
      row.appendChild(cell);
    }
    row.appendChild(document.createElement("td")).appendChild(remove);
    tbody.appendChild(row);
  }
  $("rules-empty").hidden = rules.length > 0;
}

// --- alerts feed ------------------------------------------------------------------

async function pollAlerts() {
  const generation = ++alertGeneration;
  let entries: AlertEntry[];
  try {
    entries = parseAlertLines(await api.alertLines(ALERT_STREAM));
    setBanner(null);
  } catch (err) {
    setBanner(`hub unreachable: ${String(err)}`);
    return;
  }
  if (generation !== alertGeneration) return; // a newer poll already landed
  const feed = $("alerts-feed");
  feed.innerHTML = "";
  $("alerts-empty").hidden = entries.length > 0;
  for (const entry of newestFirst(entries)) {
    const card = document.createElement("article");
    card.className = "alert-card";
    const when = document.createElement("time");
    when.textContent = new Date(entry.timestampMs).toISOString();
    const text = document.createElement("p");
    text.textContent = entry.text;
    card.append(when, text);
    if (entry.imageId) {
      const img = document.createElement("img");
      img.alt = "captured picture";
      img.width = 160;
      img.height = 120;
      resolveImage(entry.imageId, img);
      card.appendChild(img);
    }
    feed.appendChild(card);
  }
}

async function resolveImage(blobId: string, img: HTMLImageElement) {
  const cached = imageUrls.get(blobId);
  if (cached) {
    img.src = cached;
    return;
  }
  try {
    const url = await api.blobObjectUrl(blobId);
    imageUrls.set(blobId, url);
    img.src = url;
  } catch {
    img.remove();
  }
}

// --- telemetry charts ------------------------------------------------------------------

async function pollCharts() {
  const generation = ++chartGeneration;
  const { from, to } = lastTwelveMonths(new Date());
  for (const metric of ["temperature", "humidity"]) {
    let aggregates;
    try {
      aggregates = await api.telemetryMonthly(metric, from, to);
    } catch (err) {
      setBanner(`hub unreachable: ${String(err)}`);
      return;
    }
    if (generation !== chartGeneration) return;
    const host = $(`chart-${metric}`);
    host.innerHTML = "";
    $(`chart-${metric}-empty`).hidden = aggregates.length > 0;
    for (const bar of barsFor(aggregates)) {
      const column = document.createElement("div");
      column.className = "bar";
      const fill = document.createElement("div");
      fill.className = "bar-fill";
      fill.style.height = `${bar.heightPct}%`;
      fill.title = `${bar.label}: mean ${bar.value} over ${bar.count} sample(s)`;
      fill.dataset.value = String(bar.value);
      const tag = document.createElement("span");
      tag.textContent = bar.label.slice(5); // MM
      column.append(fill, tag);
      host.appendChild(column);
    }
  }
}

boot();
