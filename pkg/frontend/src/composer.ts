// Rule composer state machine: pick device A, one of its events, device B and
// an action (or the alerts pipeline preset), and the composer produces exactly
// the POST /rules payload the server accepts. All choice lists derive from the
// device capabilities the API reports; the DOM layer only renders them.

export type Preset = "single-action" | "alerts-pipeline";

export interface Device {
  id: string;
  kind: string;
  name: string;
  location: string;
  connected: boolean;
  eventNames: string[];
  actionNames: string[];
}

export interface ComposerState {
  preset: Preset;
  deviceA: string | null;
  evt: string | null;
  deviceB: string | null;
  act: string | null;
  to: string;
  container: string;
  stream: string;
}

export interface RulePayload {
  trigger: { deviceId: string; eventName: string };
  actions: Record<string, unknown>[];
}

const ADDRESS = /^[^@\s]+@[^@\s]+$/;

export function initialComposer(): ComposerState {
  return {
    preset: "single-action",
    deviceA: null,
    evt: null,
    deviceB: null,
    act: null,
    to: "",
    container: "alerts",
    stream: "alerts",
  };
}

function find(devices: Device[], id: string | null): Device | undefined {
  return devices.find((d) => d.id === id);
}

export function deviceAChoices(devices: Device[]): Device[] {
  return devices;
}

export function evtChoices(devices: Device[], state: ComposerState): string[] {
  const device = find(devices, state.deviceA);
  return device ? [...device.eventNames].sort() : [];
}

export function deviceBChoices(devices: Device[], state: ComposerState): Device[] {
  if (state.preset === "alerts-pipeline") {
    return devices.filter((d) => d.kind === "camera");
  }
  return devices.filter((d) => d.actionNames.length > 0);
}

export function actChoices(devices: Device[], state: ComposerState): string[] {
  if (state.preset === "alerts-pipeline") {
    return []; // the pipeline fixes the action sequence
  }
  const device = find(devices, state.deviceB);
  return device ? [...device.actionNames].sort() : [];
}

// Selections cascade: changing an upstream dropdown resets the stale choices
// below it.

export function selectPreset(state: ComposerState, preset: Preset): ComposerState {
  return { ...state, preset, deviceB: null, act: null };
}

export function selectDeviceA(state: ComposerState, id: string | null): ComposerState {
  return { ...state, deviceA: id, evt: null };
}

export function selectEvt(state: ComposerState, evt: string | null): ComposerState {
  return { ...state, evt };
}

export function selectDeviceB(state: ComposerState, id: string | null): ComposerState {
  return { ...state, deviceB: id, act: null };
}

export function selectAct(state: ComposerState, act: string | null): ComposerState {
  return { ...state, act };
}

export function setField(
  state: ComposerState,
  field: "to" | "container" | "stream",
  value: string,
): ComposerState {
  return { ...state, [field]: value };
}

export function canSubmit(devices: Device[], state: ComposerState): boolean {
  if (!state.deviceA || !state.evt) return false;
  if (!evtChoices(devices, state).includes(state.evt)) return false;
  if (state.preset === "single-action") {
    return (
      state.deviceB !== null &&
      state.act !== null &&
      actChoices(devices, state).includes(state.act)
    );
  }
  const camera = find(devices, state.deviceB);
  return (
    camera !== undefined &&
    camera.kind === "camera" &&
    ADDRESS.test(state.to) &&
    state.container.length > 0 &&
    state.stream.length > 0
  );
}

export function rulePayload(devices: Device[], state: ComposerState): RulePayload {
  if (!canSubmit(devices, state)) {
    throw new Error("composer is incomplete");
  }
  const trigger = { deviceId: state.deviceA!, eventName: state.evt! };
  if (state.preset === "single-action") {
    return {
      trigger,
      actions: [
        {
          type: "deviceAction",
          deviceId: state.deviceB!,
          actionName: state.act!,
          params: {},
        },
      ],
    };
  }
  return {
    trigger,
    actions: [
      { type: "captureImage", cameraId: state.deviceB!, bindAs: "img" },
      {
        type: "sendEmail",
        to: state.to,
        subject: "Door alert",
        bodyTemplate: "door opened at {timestamp}",
        attach: "img",
      },
      {
        type: "uploadPicture",
        container: state.container,
        nameTemplate: "alert-{timestamp}.png",
        source: "img",
      },
      {
        type: "appendStream",
        streamName: state.stream,
        textTemplate: "door opened at {timestamp} img:{img}",
      },
    ],
  };
}
