// Blinding guard used by tests and as a runtime tripwire: no payload the UI
// receives before session close may contain a method name.

export function payloadMentions(payload: unknown, methodNames: string[]): string[] {
  const raw = JSON.stringify(payload);
  return methodNames.filter((name) => raw.includes(name));
}

export function assertBlinded(payload: unknown, methodNames: string[]): void {
  const leaked = payloadMentions(payload, methodNames);
  if (leaked.length > 0) {
    throw new Error(`blinding violation: payload mentions ${leaked.join(', ')}`);
  }
}
